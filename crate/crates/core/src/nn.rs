//! Affine layers and multilayer perceptrons built on the tape.

use rand::Rng as _;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Sigmoid,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Identity => Ok(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::LeakyRelu(s) => tape.leaky_relu(x, s),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// A computation over a [`ParamSet`] with a declared input width.
pub trait Graph {
    fn input_dim(&self) -> usize;
    fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var>;
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: String,
    pub bias: String,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    /// Registers a layer with Glorot-uniform weights (scaled by `gain`) and zero bias.
    pub fn new(params: &mut ParamSet, prefix: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut Rng) -> Result<Self> {
        let limit = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        let w = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        let weight = format!("{prefix}.w");
        let bias = format!("{prefix}.b");
        params.insert(weight.clone(), Tensor::matrix(inputs, outputs, w)?)?;
        params.insert(bias.clone(), Tensor::zeros(vec![1, outputs]))?;
        Ok(Self {
            weight,
            bias,
            inputs,
            outputs,
        })
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        let w = tape.param(params, &self.weight)?;
        let b = tape.param(params, &self.bias)?;
        tape.affine(x, w, b)
    }
}

/// Fully connected network: `hidden` activation between layers, `output` after the last.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// `sizes` lists every width including input and output, e.g. `[4, 64, 64, 2]`.
    pub fn new(
        params: &mut ParamSet,
        prefix: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::with_output_gain(params, prefix, sizes, hidden, output, 1.0, rng)
    }

    pub fn with_output_gain(
        params: &mut ParamSet,
        prefix: &str,
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        output_gain: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Precondition(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let gain = if i + 1 == n { output_gain } else { 1.0 };
                Linear::new(params, &format!("{prefix}.l{i}"), w[0], w[1], gain, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    fn check_input(&self, tape: &Tape, x: Var) -> Result<()> {
        let (r, c) = tape.dims(x);
        if c != self.input_dim() {
            return Err(Error::Shape {
                op: "mlp.forward",
                expected: vec![r, self.input_dim()],
                got: vec![r, c],
            });
        }
        Ok(())
    }

    /// Runs the network and also returns every hidden activation, in layer order.
    pub fn forward_with_hidden(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<(Var, Vec<Var>)> {
        self.check_input(tape, x)?;
        let mut h = x;
        let mut hidden = Vec::with_capacity(self.layers.len().saturating_sub(1));
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, params, h)?;
            if i + 1 < self.layers.len() {
                h = self.hidden.apply(tape, h)?;
                hidden.push(h);
            } else {
                h = self.output.apply(tape, h)?;
            }
        }
        Ok((h, hidden))
    }
}

impl Graph for Mlp {
    fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Result<Var> {
        self.forward_with_hidden(tape, params, x).map(|(y, _)| y)
    }
}

/// Runs `graph` on `input` in a fresh tape and returns the output value.
pub fn forward<G: Graph>(graph: &G, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.input(input)?;
    let y = graph.forward(&mut tape, params, x)?;
    Ok(tape.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn input_width_is_checked() {
        let mut p = ParamSet::new();
        let mlp = Mlp::new(&mut p, "m", &[3, 4, 1], Activation::Tanh, Activation::Identity, &mut stream(1, "t")).unwrap();
        let bad = Tensor::row(&[1.0, 2.0]);
        assert!(matches!(forward(&mlp, &p, &bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn tanh_mlp_at_zero_input_is_bias_path() {
        // Zero input means only the biases propagate: y = W2^T tanh(b1) + b2.
        let mut p = ParamSet::new();
        let mlp = Mlp::new(&mut p, "m", &[2, 3, 2], Activation::Tanh, Activation::Tanh, &mut stream(7, "t")).unwrap();
        p.get_mut("m.l0.b").unwrap().data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        p.get_mut("m.l1.b").unwrap().data_mut().copy_from_slice(&[0.05, -0.05]);
        let w2 = p.get("m.l1.w").unwrap().data().to_vec();
        let h: Vec<f64> = [0.1f64, -0.2, 0.3].iter().map(|b| b.tanh()).collect();
        let expect: Vec<f64> = (0..2)
            .map(|j| (h[0] * w2[j] + h[1] * w2[2 + j] + h[2] * w2[4 + j] + [0.05, -0.05][j]).tanh())
            .collect();
        let y = forward(&mlp, &p, &Tensor::row(&[0.0, 0.0])).unwrap();
        for (a, b) in y.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

//! Adam optimizer.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    first: BTreeMap<String, Vec<f64>>,
    second: BTreeMap<String, Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(3e-4)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one bias-corrected Adam update to every parameter. Gradients are left as-is.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (name, p) in params.iter() {
            match p.grad() {
                None => return Err(Error::MissingGrad(name.to_string())),
                Some(g) if g.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::NonFinite(format!("gradient of {name}")))
                }
                _ => {}
            }
        }
        let t = self.t + 1;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        let mut updates = Vec::with_capacity(params.len());
        for (name, p) in params.iter() {
            let g = p.grad().expect("checked above");
            let m = self.first.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.second.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
            if m.len() != g.len() {
                return Err(Error::Shape {
                    op: "adam",
                    expected: vec![m.len()],
                    got: vec![g.len()],
                });
            }
            let mut delta = Vec::with_capacity(g.len());
            for ((mi, vi), gi) in m.iter_mut().zip(v.iter_mut()).zip(g) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let step = self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
                delta.push(step);
            }
            if delta.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("adam update of {name}")));
            }
            updates.push((name.to_string(), delta));
        }
        for (name, delta) in updates {
            let p = params.get_mut(&name)?;
            for (x, d) in p.data_mut().iter_mut().zip(delta) {
                *x -= d;
            }
        }
        self.t = t;
        params.bump_version();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn one(v: f64, g: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(v)).unwrap();
        p.get_mut("x").unwrap().grad_mut().unwrap()[0] = g;
        p
    }

    #[test]
    fn zero_grads_leave_params_but_count_step() {
        let mut p = one(1.5, 0.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut p).unwrap();
        assert_eq!(p.get("x").unwrap().data(), &[1.5]);
        assert_eq!(adam.steps(), 1);
        assert_eq!(p.version(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one(0.0, 1.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut p).unwrap();
        // m_hat = 1, v_hat = 1, step = 0.1 / (1 + 1e-8)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.get("x").unwrap().data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.get("x").unwrap().grad().unwrap(), &[1.0]);
    }

    #[test]
    fn second_step_matches_first_with_bias_correction() {
        let mut p = one(0.0, 1.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut p).unwrap();
        let x1 = p.get("x").unwrap().data()[0];
        adam.step(&mut p).unwrap();
        let x2 = p.get("x").unwrap().data()[0];
        let (s1, s2) = (x1.abs(), (x2 - x1).abs());
        assert!(((s2 - s1) / s1).abs() < 0.01);
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = ParamSet::new();
        p.insert_raw("x".into(), Tensor::scalar(0.0));
        assert!(matches!(Adam::new(0.1).step(&mut p), Err(Error::MissingGrad(_))));
    }
}

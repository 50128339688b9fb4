//! Central finite-difference gradient checking.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::ParamSet;

/// Largest relative error between tape gradients and central differences of `loss` with
/// respect to every parameter in `params`.
///
/// Relative error is `|a - n| / max(1, |a|, |n|)`, so tiny gradients are compared absolutely.
pub fn finite_diff_check<F>(params: &ParamSet, h: f64, loss: F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("step h must be positive, got {h}")));
    }
    let mut tape = Tape::new();
    let out = loss(&mut tape, params)?;
    let grads = tape.backward(out)?;

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut t = Tape::new();
        let v = loss(&mut t, p)?;
        Ok(t.scalar(v))
    };

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let n = params.get(&name)?.numel();
        let analytic = grads.get(&name).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
        for i in 0..n {
            let orig = params.get(&name)?.data()[i];
            probe.get_mut(&name)?.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

mod common;

use adventurer_core::autodiff::Tape;
use adventurer_core::gradcheck::finite_diff_check;
use adventurer_core::{ParamSet, Tensor};
use proptest::prelude::*;

#[test]
fn every_layer_matches_finite_differences() {
    for seed in 0..5 {
        for (name, err) in common::layer_cases(seed) {
            let tol = if name == "affine" { 1e-8 } else { 1e-4 };
            assert!(err <= tol, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn ppo_loss_matches_finite_differences() {
    for seed in 0..5 {
        for (name, err) in common::ppo_cases(seed) {
            assert!(err <= 1e-4, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn bigan_losses_match_finite_differences() {
    for seed in 0..5 {
        for (name, err) in common::bigan_cases(seed) {
            assert!(err <= 1e-4, "{name} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn zero_step_is_rejected() {
    let mut p = ParamSet::new();
    p.insert("w", Tensor::scalar(1.0)).unwrap();
    assert!(finite_diff_check(&p, 0.0, |t, p| t.param(p, "w")).is_err());
}

fn grads_of(p: &ParamSet, a: f64, b: f64, x: &Tensor) -> Vec<f64> {
    let mut t = Tape::new();
    let xv = t.input(x).unwrap();
    let w = t.param(p, "w").unwrap();
    let y = t.matmul(xv, w).unwrap();
    let f = t.tanh(y).unwrap();
    let f = t.sum(f).unwrap();
    let g = t.square(y).unwrap();
    let g = t.mean(g).unwrap();
    let fa = t.scale(f, a).unwrap();
    let gb = t.scale(g, b).unwrap();
    let out = t.add(fa, gb).unwrap();
    t.backward(out).unwrap().get("w").unwrap().to_vec()
}

proptest! {
    #[test]
    fn backward_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, w in prop::collection::vec(-1.0f64..1.0, 6), x in prop::collection::vec(-1.0f64..1.0, 6)) {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::matrix(3, 2, w).unwrap()).unwrap();
        let x = Tensor::matrix(2, 3, x).unwrap();
        let both = grads_of(&p, a, b, &x);
        let only_f = grads_of(&p, 1.0, 0.0, &x);
        let only_g = grads_of(&p, 0.0, 1.0, &x);
        for i in 0..both.len() {
            let want = a * only_f[i] + b * only_g[i];
            prop_assert!((both[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }
}

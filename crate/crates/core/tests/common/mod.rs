#![allow(dead_code)]

use adventurer_core::autodiff::{Tape, Var};
use adventurer_core::env::{ActionKind, EnvSpec, StateSnapshot};
use adventurer_core::gradcheck::finite_diff_check;
use adventurer_core::nn::{Activation, Graph, Mlp};
use adventurer_core::novelty::{Bigan, BiganConfig};
use adventurer_core::ppo::{ActorCritic, Minibatch, PpoConfig};
use adventurer_core::rng::{stream, Rng};
use adventurer_core::{ParamSet, Result, Tensor};
use rand::Rng as _;

pub const H: f64 = 1e-5;

pub fn uniform(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn unary_case(seed: u64, op: fn(&mut Tape, Var) -> Result<Var>) -> f64 {
    let mut rng = stream(seed, "gradcheck");
    let mut p = ParamSet::new();
    p.insert("w", Tensor::matrix(3, 4, uniform(&mut rng, 12, -1.0, 1.0)).unwrap()).unwrap();
    p.insert("b", Tensor::matrix(1, 4, uniform(&mut rng, 4, -0.5, 0.5)).unwrap()).unwrap();
    let x = Tensor::matrix(5, 3, uniform(&mut rng, 15, -1.0, 1.0)).unwrap();
    let c = uniform(&mut rng, 64, -1.0, 1.0);
    finite_diff_check(&p, H, |t, p| {
        let xv = t.input(&x)?;
        let w = t.param(p, "w")?;
        let b = t.param(p, "b")?;
        let y = t.affine(xv, w, b)?;
        let y = op(t, y)?;
        let (r, k) = t.dims(y);
        let cv = t.constant(r, k, c[..r * k].to_vec())?;
        let prod = t.mul(y, cv)?;
        t.sum(prod)
    })
    .unwrap()
}

/// Named finite-difference errors for every op and layer type at one seed.
pub fn layer_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let mut out: Vec<(&'static str, f64)> = vec![
        ("affine", unary_case(seed, |_, v| Ok(v))),
        ("tanh", unary_case(seed, |t, v| t.tanh(v))),
        ("relu", unary_case(seed, |t, v| t.relu(v))),
        ("leaky_relu", unary_case(seed, |t, v| t.leaky_relu(v, 0.2))),
        ("sigmoid", unary_case(seed, |t, v| t.sigmoid(v))),
        ("softplus", unary_case(seed, |t, v| t.softplus(v))),
        ("exp", unary_case(seed, |t, v| t.exp(v))),
        ("abs", unary_case(seed, |t, v| t.abs(v))),
        ("square", unary_case(seed, |t, v| t.square(v))),
        ("log", unary_case(seed, |t, v| {
            let s = t.square(v)?;
            let s = t.add_scalar(s, 0.5)?;
            t.log(s)
        })),
        ("log_softmax", unary_case(seed, |t, v| t.log_softmax(v))),
        ("gather", unary_case(seed, |t, v| {
            let l = t.log_softmax(v)?;
            let g = t.gather(l, &[0, 3, 1, 2, 3])?;
            let s = t.scale(g, 2.0)?;
            let c = t.concat(s, v)?;
            t.log_softmax(c)
        })),
        ("clamp", unary_case(seed, |t, v| t.clamp(v, -0.3, 0.4))),
        ("min", unary_case(seed, |t, v| {
            let w = t.tanh(v)?;
            let s = t.scale(v, 0.5)?;
            t.min(w, s)
        })),
        ("sum_cols", unary_case(seed, |t, v| {
            let r = t.sum_cols(v)?;
            let sq = t.square(v)?;
            t.mul(sq, r)
        })),
        ("mean_abs", unary_case(seed, |t, v| {
            let m = t.mean_abs(v)?;
            t.mul(v, m)
        })),
        ("mean_square", unary_case(seed, |t, v| {
            let m = t.mean_square(v)?;
            t.mul(v, m)
        })),
        ("matmul", unary_case(seed, |t, v| {
            let c = t.constant(4, 4, (0..16).map(|i| (i as f64 * 0.37).sin()).collect())?;
            t.matmul(v, c)
        })),
        ("sub_neg", unary_case(seed, |t, v| {
            let n = t.neg(v)?;
            let e = t.tanh(v)?;
            t.sub(e, n)
        })),
    ];
    let mut rng = stream(seed, "gradcheck.mlp");
    let mut p = ParamSet::new();
    let mlp = Mlp::new(&mut p, "m", &[4, 8, 8, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    let x = Tensor::matrix(6, 4, uniform(&mut rng, 24, -1.0, 1.0)).unwrap();
    out.push((
        "tanh_mlp",
        finite_diff_check(&p, H, |t, p| {
            let xv = t.input(&x)?;
            let y = mlp.forward(t, p, xv)?;
            t.mean_square(y)
        })
        .unwrap(),
    ));
    out
}

fn ppo_case(seed: u64, action: ActionKind) -> f64 {
    let spec = EnvSpec {
        obs_dim: 4,
        action: action.clone(),
        horizon: 10,
        binary_obs: false,
    };
    let cfg = PpoConfig {
        hidden: 8,
        ..PpoConfig::default()
    };
    let mut rng = stream(seed, "gradcheck.ppo");
    let model = ActorCritic::new(&spec, &cfg, &mut rng).unwrap();
    let n = 12;
    let obs: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, 4, -1.0, 1.0)).collect();
    let actions: Vec<Vec<f64>> = (0..n)
        .map(|_| match action {
            ActionKind::Discrete(k) => vec![rng.random_range(0..k) as f64],
            ActionKind::Continuous { dim, .. } => uniform(&mut rng, dim, -1.0, 1.0),
        })
        .collect();
    let current = model.log_probs(&obs, &actions).unwrap();
    let mb = Minibatch {
        obs: obs.iter().map(Vec::as_slice).collect(),
        actions,
        old_log_probs: current.iter().map(|l| l + rng.random_range(-0.3..0.3)).collect(),
        advantages: uniform(&mut rng, n, -1.0, 1.0),
        returns_e: uniform(&mut rng, n, -1.0, 1.0),
        returns_i: uniform(&mut rng, n, -1.0, 1.0),
    };
    finite_diff_check(&model.params, H, |t, p| Ok(model.loss_graph(p, t, &mb, &cfg)?.total)).unwrap()
}

pub fn ppo_cases(seed: u64) -> Vec<(&'static str, f64)> {
    vec![
        ("ppo_discrete", ppo_case(seed, ActionKind::Discrete(3))),
        (
            "ppo_continuous",
            ppo_case(
                seed,
                ActionKind::Continuous {
                    dim: 2,
                    low: -1.0,
                    high: 1.0,
                },
            ),
        ),
    ]
}

pub fn bigan_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let cfg = BiganConfig {
        latent_dim: 3,
        hidden: 8,
        feature_width: 8,
        ..BiganConfig::default()
    };
    let b = Bigan::new(6, true, &cfg, seed).unwrap();
    let mut rng = stream(seed, "gradcheck.bigan");
    let x = Tensor::matrix(5, 6, uniform(&mut rng, 30, 0.05, 0.95)).unwrap();
    let z = Tensor::matrix(5, 3, uniform(&mut rng, 15, -2.0, 2.0)).unwrap();
    let d = finite_diff_check(&b.disc_params, H, |t, p| {
        let xv = t.input(&x)?;
        let zv = t.input(&z)?;
        b.d_loss_graph(t, &b.enc_params, &b.gen_params, p, xv, zv)
    })
    .unwrap();
    let mut eg = b.enc_params.clone();
    for (name, tensor) in b.gen_params.iter() {
        eg.insert(name, tensor.clone()).unwrap();
    }
    let ge = finite_diff_check(&eg, H, |t, p| {
        let xv = t.input(&x)?;
        let zv = t.input(&z)?;
        b.ge_loss_graph(t, p, p, &b.disc_params, xv, zv)
    })
    .unwrap();
    vec![("bigan_d", d), ("bigan_ge", ge)]
}

/// Brute-force top-K: best score per distinct snapshot with the offer index at which that best
/// was first reached, ordered by score then earlier index.
pub fn top_k_oracle(offers: &[(StateSnapshot, f64)], k: usize) -> Vec<(StateSnapshot, f64)> {
    let mut best: Vec<(StateSnapshot, f64, usize)> = Vec::new();
    for (i, (s, b)) in offers.iter().enumerate() {
        match best.iter_mut().find(|e| e.0 == *s) {
            Some(e) if *b > e.1 => {
                e.1 = *b;
                e.2 = i;
            }
            Some(_) => {}
            None => best.push((s.clone(), *b, i)),
        }
    }
    best.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));
    best.truncate(k);
    best.into_iter().map(|(s, b, _)| (s, b)).collect()
}

pub fn snap(i: u8) -> StateSnapshot {
    StateSnapshot {
        env_tag: "oracle".into(),
        bytes: vec![i],
    }
}


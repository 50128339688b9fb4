use std::hint::black_box;

use adventurer_core::autodiff::Tape;
use adventurer_core::harness::corpus::two_room;
use adventurer_core::nn::{Activation, Graph, Mlp};
use adventurer_core::novelty::{Bigan, BiganConfig, NoveltyEstimator, StateBuffer};
use adventurer_core::ppo::compute_gae;
use adventurer_core::rng::stream;
use adventurer_core::{ParamSet, Tensor};
use criterion::{criterion_group, criterion_main, Criterion};

fn mlp_forward_backward(c: &mut Criterion) {
    let mut rng = stream(0, "bench.mlp");
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, "m", &[144, 64, 64, 8], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
    let x = Tensor::matrix(64, 144, (0..64 * 144).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
    c.bench_function("mlp_144x64x64x8_batch64_fwd_bwd", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let xv = tape.input(&x).unwrap();
            let y = mlp.forward(&mut tape, &params, xv).unwrap();
            let l = tape.mean_square(y).unwrap();
            black_box(tape.backward(l).unwrap());
        })
    });
}

fn bigan_kernels(c: &mut Criterion) {
    let corpus = two_room(0, 256, 0.05).unwrap();
    let buffer = StateBuffer::from_states(corpus.d1a.clone()).unwrap();
    let cfg = BiganConfig {
        latent_dim: 32,
        ..BiganConfig::default()
    };
    let mut bigan = Bigan::new(144, true, &cfg, 0).unwrap();
    c.bench_function("bigan_train_step_144", |b| b.iter(|| black_box(bigan.train_step(&buffer).unwrap())));
    let states = &corpus.d2b[..64];
    c.bench_function("bigan_score_64x144", |b| b.iter(|| black_box(bigan.score_batch(states).unwrap())));
}

fn gae(c: &mut Criterion) {
    let n = 2048;
    let rewards: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 97 == 0))).collect();
    let values: Vec<f64> = (0..=n).map(|i| (i as f64 * 0.01).sin()).collect();
    let dones: Vec<bool> = (0..n).map(|i| i % 200 == 199).collect();
    c.bench_function("gae_2048", |b| {
        b.iter(|| black_box(compute_gae(&rewards, &values, &dones, 0.99, 0.95).unwrap()))
    });
}

criterion_group!(benches, mlp_forward_backward, bigan_kernels, gae);
criterion_main!(benches);

use adventurer_core::env::{Action, Environment, GridMaze, PointGoal, SparseChain, Transition, LEFT, RIGHT};
use adventurer_core::rng::stream;
use proptest::prelude::*;
use rand::Rng as _;

fn envs(horizon: usize) -> Vec<Box<dyn Environment>> {
    vec![
        Box::new(SparseChain::new(6, horizon).unwrap()),
        Box::new(GridMaze::new(3, horizon).unwrap()),
        Box::new(PointGoal::new(0.1, 0.1, false, horizon).unwrap()),
    ]
}

fn action_for(env: &dyn Environment, code: u8) -> Action {
    match env.name() {
        "sparse_chain" => Action::Discrete(usize::from(code % 4 != 0)),
        "grid_maze" => Action::Discrete(usize::from(code % 4)),
        _ => {
            let a = f64::from(code) / 127.5 - 1.0;
            Action::Continuous(vec![a, -a * 0.5])
        }
    }
}

fn rollout(env: &mut dyn Environment, codes: &[u8]) -> Vec<Transition> {
    let mut out = Vec::new();
    for &c in codes {
        let a = action_for(env, c);
        let t = env.step(&a).unwrap();
        let done = t.done;
        out.push(t);
        if done {
            break;
        }
    }
    out
}

/// Probability that uniformly random actions reach the end of a chain of `n` cells within `h`
/// steps, by dynamic programming over the position distribution.
fn chain_success_probability(n: usize, h: usize) -> f64 {
    let mut dist = vec![0.0; n];
    dist[0] = 1.0;
    let mut reached = 0.0;
    for _ in 0..h {
        let mut next = vec![0.0; n];
        for (pos, p) in dist.iter().enumerate().take(n - 1) {
            next[0] += p / 2.0;
            if pos + 1 == n - 1 {
                reached += p / 2.0;
            } else {
                next[pos + 1] += p / 2.0;
            }
        }
        dist = next;
    }
    reached
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restore_replays_bit_exactly(seed in any::<u64>(), prefix in prop::collection::vec(any::<u8>(), 0..6), tail in prop::collection::vec(any::<u8>(), 1..12)) {
        for mut env in envs(20) {
            env.reset(seed);
            let head = rollout(env.as_mut(), &prefix);
            if head.last().is_some_and(|t| t.done) {
                continue;
            }
            let snap = env.snapshot();
            let first = rollout(env.as_mut(), &tail);
            let mut fresh = envs(20).into_iter().find(|e| e.name() == env.name()).unwrap();
            fresh.reset(seed.wrapping_add(1));
            fresh.restore(&snap).unwrap();
            let second = rollout(fresh.as_mut(), &tail);
            prop_assert_eq!(first, second);
        }
    }

    #[test]
    fn episodes_never_exceed_the_horizon(seed in any::<u64>(), horizon in 1usize..15, codes in prop::collection::vec(any::<u8>(), 40)) {
        for mut env in envs(horizon) {
            env.reset(seed);
            let steps = rollout(env.as_mut(), &codes);
            prop_assert!(steps.len() <= horizon);
            prop_assert!(steps.last().unwrap().done);
            for t in &steps {
                prop_assert_eq!(t.observation.len(), env.spec().obs_dim);
            }
        }
    }
}

#[test]
fn same_seed_and_actions_give_same_stream() {
    let codes: Vec<u8> = (0..30).map(|i| (i * 37 % 251) as u8).collect();
    for (mut a, mut b) in envs(25).into_iter().zip(envs(25)) {
        assert_eq!(a.reset(9), b.reset(9));
        assert_eq!(rollout(a.as_mut(), &codes), rollout(b.as_mut(), &codes));
    }
}

#[test]
fn foreign_snapshots_are_rejected() {
    let mut all = envs(10);
    let snaps: Vec<_> = all
        .iter_mut()
        .map(|e| {
            e.reset(0);
            e.snapshot()
        })
        .collect();
    for (i, env) in all.iter_mut().enumerate() {
        for (j, s) in snaps.iter().enumerate() {
            assert_eq!(env.restore(s).is_ok(), i == j, "env {i} snapshot {j}");
        }
    }
    let mut chain = SparseChain::new(6, 10).unwrap();
    let mut bad = chain.snapshot();
    bad.bytes.pop();
    assert!(chain.restore(&bad).is_err());
}

#[test]
fn restore_then_reset_returns_to_start() {
    let mut chain = SparseChain::new(6, 10).unwrap();
    chain.reset(0);
    for _ in 0..3 {
        chain.step(&Action::Discrete(RIGHT)).unwrap();
    }
    let snap = chain.snapshot();
    chain.reset(0);
    chain.restore(&snap).unwrap();
    assert_eq!(chain.position(), 3);
    chain.reset(0);
    assert_eq!(chain.position(), 0);
    chain.step(&Action::Discrete(LEFT)).unwrap();
    assert_eq!(chain.position(), 0);
}

#[test]
fn random_walk_rarely_reaches_the_chain_end() {
    for n in 2..=12 {
        let h = 2 * n;
        let p = chain_success_probability(n, h);
        let windows = (h + 2 - n) as f64;
        assert!(p <= windows * 0.5f64.powi(n as i32 - 1) + 1e-15, "n={n}: {p}");
    }
    assert_eq!(chain_success_probability(2, 4), 15.0 / 16.0);
    assert!(chain_success_probability(30, 60) < 1e-7);
}

#[test]
fn random_walk_matches_dynamic_program() {
    let (n, h) = (6, 12);
    let want = chain_success_probability(n, h);
    let mut rng = stream(5, "test.chain");
    let trials = 40_000;
    let mut hits = 0;
    for _ in 0..trials {
        let mut env = SparseChain::new(n, h).unwrap();
        env.reset(0);
        loop {
            let t = env.step(&Action::Discrete(rng.random_range(0..2))).unwrap();
            if t.done {
                hits += usize::from(t.success);
                break;
            }
        }
    }
    let got = hits as f64 / trials as f64;
    let se = (want * (1.0 - want) / trials as f64).sqrt();
    assert!((got - want).abs() < 5.0 * se, "{got} vs {want}");
}

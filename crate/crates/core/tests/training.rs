use adventurer_core::checkpoint;
use adventurer_core::harness::{read_metrics, train, train_to_dir, RunConfig};
use adventurer_core::ppo::{ppo_update, ActorCritic, Batch, Step, Trajectory};
use adventurer_core::rng::stream;
use rand::RngCore;

fn config(pairs: &[(&str, &str)]) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in pairs {
        cfg.set(k, v).unwrap();
    }
    cfg
}

/// Plain PPO written against the environment and model primitives only.
fn reference_ppo(cfg: &RunConfig) -> Vec<f64> {
    let mut env = cfg.make_env().unwrap();
    let spec = env.spec().clone();
    let root = cfg.training.seed;
    let mut model = ActorCritic::new(&spec, &cfg.ppo, &mut stream(root, "policy.init")).unwrap();
    let mut env_rng = stream(root, "env");
    let mut action_rng = stream(root, "action");
    let mut minibatch_rng = stream(root, "minibatch");
    let mut losses = Vec::new();
    for epoch in 0..cfg.training.epochs {
        let mut trajs = Vec::new();
        for episode in 0..cfg.training.episodes {
            let mut obs = env.reset(env_rng.next_u64());
            let mut tr = Trajectory {
                epoch,
                episode,
                ..Trajectory::default()
            };
            loop {
                let s = model.act(&obs, &mut action_rng).unwrap();
                let t = env.step(&s.action).unwrap();
                tr.steps.push(Step {
                    obs,
                    action: s.raw,
                    log_prob: s.log_prob,
                    reward_e: t.reward,
                    bonus: 0.0,
                    reward_i: 0.0,
                    value_e: s.value_e,
                    value_i: s.value_i,
                    done: t.done,
                });
                obs = t.observation;
                if t.done {
                    tr.terminal = t.terminal;
                    tr.success = t.success;
                    break;
                }
            }
            let (ve, vi) = model.values(std::slice::from_ref(&obs)).unwrap();
            tr.bootstrap_e = ve[0];
            tr.bootstrap_i = vi[0];
            trajs.push(tr);
        }
        let batch = Batch::from_trajectories(&trajs, &cfg.ppo).unwrap();
        let stats = ppo_update(&mut model, &batch, &cfg.ppo, &mut minibatch_rng).unwrap();
        losses.extend(stats.policy_losses);
    }
    losses
}

#[test]
fn zero_beta_reproduces_plain_ppo() {
    let base = [
        ("env.name", "sparse_chain"),
        ("env.chain_length", "8"),
        ("training.epochs", "4"),
        ("training.episodes", "3"),
        ("training.horizon", "16"),
        ("training.seed", "21"),
        ("ppo.beta", "0"),
        ("ppo.minibatch", "16"),
    ];
    let mut none = base.to_vec();
    none.push(("novelty.method", "none"));
    let mut bigan = base.to_vec();
    bigan.push(("novelty.method", "bigan"));
    let cfg_none = config(&none);
    let reference = reference_ppo(&cfg_none);
    assert!(!reference.is_empty());
    assert_eq!(train(&cfg_none).unwrap().policy_losses, reference);
    assert_eq!(train(&config(&bigan)).unwrap().policy_losses, reference);
}

#[test]
fn positive_beta_changes_the_policy_updates() {
    let base = [
        ("env.name", "sparse_chain"),
        ("env.chain_length", "8"),
        ("training.epochs", "3"),
        ("training.episodes", "3"),
        ("training.horizon", "16"),
        ("novelty.method", "bigan"),
    ];
    let mut zero = base.to_vec();
    zero.push(("ppo.beta", "0"));
    let mut some = base.to_vec();
    some.push(("ppo.beta", "0.5"));
    assert_ne!(train(&config(&zero)).unwrap().policy_losses, train(&config(&some)).unwrap().policy_losses);
}

#[test]
fn one_short_episode_yields_one_record() {
    let cfg = config(&[
        ("env.name", "sparse_chain"),
        ("env.chain_length", "10"),
        ("training.epochs", "1"),
        ("training.episodes", "1"),
        ("training.horizon", "5"),
    ]);
    let out = train(&cfg).unwrap();
    assert_eq!(out.records.len(), 1);
    assert!(out.records[0].env_steps <= 5);
}

#[test]
fn every_environment_trains_reproducibly() {
    for env in ["sparse_chain", "grid_maze", "point_goal"] {
        for method in ["bigan", "rnd", "vae"] {
            let cfg = config(&[
                ("env.name", env),
                ("training.epochs", "2"),
                ("training.episodes", "2"),
                ("training.horizon", "8"),
                ("novelty.method", method),
                ("memory.enabled", "true"),
                ("bigan.steps_per_epoch", "3"),
            ]);
            let a = train(&cfg).unwrap().records;
            let b = train(&cfg).unwrap().records;
            assert_eq!(a, b, "{env}/{method}");
            assert!(a.iter().all(|r| r.mean_intrinsic.is_finite()), "{env}/{method}");
        }
    }
}

#[test]
fn run_directory_holds_metrics_config_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&[
        ("env.name", "point_goal"),
        ("training.epochs", "4"),
        ("training.episodes", "2"),
        ("training.horizon", "10"),
        ("output.checkpoint_every", "2"),
    ]);
    let out = train_to_dir(&cfg, dir.path()).unwrap();
    let (records, skipped) = read_metrics(&dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(skipped, 0);
    assert_eq!(records, out.records);
    let epochs: Vec<usize> = records.iter().map(|r| r.epoch).collect();
    assert_eq!(epochs, [0, 1, 2, 3]);

    let saved = RunConfig::from_file(&dir.path().join("config.txt")).unwrap();
    assert_eq!(saved.to_text(), cfg.to_text());

    let policy = checkpoint::load(dir.path().join("policy.advk")).unwrap();
    assert_eq!(policy.checksum(), out.model.params.checksum());
    let novelty = checkpoint::load(dir.path().join("novelty.advk")).unwrap();
    assert!(!novelty.is_empty());
    for e in [1, 3] {
        assert!(dir.path().join(format!("policy.epoch{e}.advk")).exists());
    }
}

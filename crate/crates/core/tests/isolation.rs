//! The learner never sees the hand-coded pose reward: it lives only in
//! `EvalTrace`, and none of the training-side modules can name it.

const LEARNER_SOURCES: &[(&str, &str)] = &[
    ("metric/mod.rs", include_str!("../src/metric/mod.rs")),
    ("metric/loss.rs", include_str!("../src/metric/loss.rs")),
    (
        "metric/profile.rs",
        include_str!("../src/metric/profile.rs"),
    ),
    ("metric/eval.rs", include_str!("../src/metric/eval.rs")),
    ("pairs/mod.rs", include_str!("../src/pairs/mod.rs")),
    ("pairs/augment.rs", include_str!("../src/pairs/augment.rs")),
    ("pairs/batch.rs", include_str!("../src/pairs/batch.rs")),
    ("pairs/crop.rs", include_str!("../src/pairs/crop.rs")),
    ("pairs/memory.rs", include_str!("../src/pairs/memory.rs")),
    ("nn/mod.rs", include_str!("../src/nn/mod.rs")),
    ("nn/net.rs", include_str!("../src/nn/net.rs")),
    ("nn/layers.rs", include_str!("../src/nn/layers.rs")),
    ("nn/init.rs", include_str!("../src/nn/init.rs")),
    ("rl/policy.rs", include_str!("../src/rl/policy.rs")),
    ("rl/advantage.rs", include_str!("../src/rl/advantage.rs")),
    ("rl/update.rs", include_str!("../src/rl/update.rs")),
];

#[test]
fn training_modules_never_name_the_pose_reward() {
    for (file, src) in LEARNER_SOURCES {
        assert!(
            !src.to_lowercase().contains("oracle"),
            "{file} refers to the evaluation reward"
        );
    }
}

#[test]
fn trajectories_carry_no_reward_until_scored() {
    use rand_chacha::rand_core::SeedableRng;
    use virl_core::autodiff::ParameterStore;
    use virl_core::env::{motion_library, ChainEnv, EnvConfig};
    use virl_core::rl::{collect, GaussianPolicy, MlpConfig, OBS_DIM};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut store = ParameterStore::new();
    let policy =
        GaussianPolicy::register(&mut store, OBS_DIM, 3, &MlpConfig::small(), 0.2, &mut rng)
            .unwrap();
    let mut env = ChainEnv::new(EnvConfig::default(), motion_library(4)[0].clone()).unwrap();
    let eps = collect(&mut env, &policy, &store, 100, &mut rng).unwrap();
    for (traj, trace) in &eps {
        assert!(traj.rewards.is_empty());
        assert_eq!(trace.oracle_rewards.len(), traj.len());
        let ep = traj.episode().unwrap();
        assert_eq!(ep.agent.frames, traj.agent_frames);
    }
}

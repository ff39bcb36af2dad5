use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use virl_core::autodiff::{grad_check, Adam, GradCheckOptions};
use virl_core::env::{motion_library, ChainEnv, EnvConfig, PoseState};
use virl_core::rl::{
    collect, discounted_returns, gae, normalize, observe, policy_update, value_update,
    GaussianPolicy, MlpConfig, PolicyBatch, UpdateConfig, ValueFunction, OBS_DIM,
};
use virl_core::{Array, Error, Graph, Inputs, ParameterStore};

fn policy(obs: usize, act: usize, std: f32, seed: u64) -> (GaussianPolicy, ParameterStore) {
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p =
        GaussianPolicy::register(&mut store, obs, act, &MlpConfig::small(), std, &mut rng).unwrap();
    (p, store)
}

fn random_states(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

#[test]
fn observation_has_no_pixels() {
    let s = observe(&PoseState::rest());
    assert_eq!(s.len(), OBS_DIM);
    assert_eq!(OBS_DIM, 10);
}

#[test]
fn tiny_sigma_samples_the_mean() {
    let (p, store) = policy(4, 3, 1e-8, 1);
    let s = vec![0.3, -0.2, 0.5, 0.1];
    let mu = p.means(&store, &[s.clone()]).unwrap().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (a, _) = p.sample_action(&store, &s, &mut rng).unwrap();
    for (x, m) in a.iter().zip(&mu) {
        assert!((x - m).abs() <= 1e-6);
    }
}

#[test]
fn log_prob_at_the_mode() {
    let (p, store) = policy(4, 3, 0.2, 3);
    let mu = vec![0.1, 0.2, 0.3];
    let want: f64 = p
        .std(&store)
        .iter()
        .map(|s| -(s * (2.0 * std::f64::consts::PI).sqrt()).ln())
        .sum();
    assert!((p.log_prob(&store, &mu, &mu) - want).abs() < 1e-12);
    assert!((want + 3.0 * (0.2f64 * (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-6);
}

#[test]
fn sample_mean_matches_policy_mean() {
    let (p, store) = policy(4, 3, 0.2, 4);
    let s = vec![0.5, 0.5, -0.5, 0.0];
    let mu = p.means(&store, &[s.clone()]).unwrap().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let mut sum = [0.0f64; 3];
    for _ in 0..n {
        let (a, _) = p.sample_action(&store, &s, &mut rng).unwrap();
        for j in 0..3 {
            sum[j] += a[j] as f64;
        }
    }
    for j in 0..3 {
        let err = (sum[j] / n as f64 - mu[j] as f64).abs();
        assert!(err < 4.0 * 0.2 / (n as f64).sqrt(), "dim {j}: {err}");
    }
}

#[test]
fn returns_and_advantages() {
    let g = discounted_returns(&[1.0, 1.0, 1.0], 0.9).unwrap();
    for (x, w) in g.iter().zip([2.71, 1.9, 1.0]) {
        assert!((x - w).abs() < 1e-12);
    }
    let r = [0.5, -1.0, 2.0, 0.25];
    assert_eq!(discounted_returns(&r, 0.0).unwrap(), r.to_vec());
    let a = gae(&r, &[0.0; 4], 0.0, 0.9, 1.0).unwrap();
    let g = discounted_returns(&r, 0.9).unwrap();
    for (x, y) in a.iter().zip(&g) {
        assert!((x - y).abs() < 1e-12);
    }
    assert_eq!(
        discounted_returns(&[], 0.9).unwrap_err(),
        Error::EmptyTrajectory
    );
    assert_eq!(
        gae(&[], &[], 0.0, 0.9, 0.9).unwrap_err(),
        Error::EmptyTrajectory
    );
}

#[test]
fn normalized_advantages_are_standard() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let n = rng.random_range(2..500);
        let shift = rng.random_range(-100.0..100.0);
        let mut xs: Vec<f64> = (0..n)
            .map(|_| shift + rng.random_range(-30.0..30.0))
            .collect();
        normalize(&mut xs);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() <= 1e-6 && (std - 1.0).abs() <= 1e-6);
    }
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    let (p, store) = policy(5, 3, 0.3, 7);
    let mut store = store.cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 6;
    let states = random_states(&mut rng, n, 5);
    let actions = random_states(&mut rng, n, 3);
    let flat = |rows: &Vec<Vec<f32>>, d: usize| {
        Array::new(
            vec![rows.len(), d],
            rows.iter().flatten().map(|&v| v as f64).collect(),
        )
        .unwrap()
    };
    let inputs = Inputs::new()
        .with("s", flat(&states, 5))
        .with("a", flat(&actions, 3));
    let mut g = Graph::<f64>::new();
    let s = g.input("s");
    let a = g.input("a");
    let lp = p.log_prob_node(&mut g, s, a, n);
    let total = g.sum(lp);
    let opts = GradCheckOptions {
        eps: 1e-6,
        max_coords_per_param: Some(32),
        ..GradCheckOptions::default()
    };
    let rep = grad_check(&mut g, total, &mut store, &inputs, &opts, &mut rng).unwrap();
    assert!(rep.passed(1e-4), "{rep:?}");

    // The graph density agrees with the closed form.
    let f32_store = store.cast::<f32>();
    let mu = p.means(&f32_store, &states).unwrap();
    for i in 0..n {
        let closed = p.log_prob(&f32_store, &mu[i], &actions[i]);
        assert!((g.value(lp).data()[i] - closed).abs() < 1e-4);
    }
}

fn synthetic_batch(p: &GaussianPolicy, store: &ParameterStore, seed: u64, n: usize) -> PolicyBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = random_states(&mut rng, n, p.obs_dim);
    let mut actions = Vec::new();
    let mut log_probs = Vec::new();
    for s in &states {
        let (a, lp) = p.sample_action(store, s, &mut rng).unwrap();
        actions.push(a);
        log_probs.push(lp);
    }
    let mut advantages: Vec<f64> = actions
        .iter()
        .map(|a| a[0] as f64 - 0.5 * a[1] as f64)
        .collect();
    normalize(&mut advantages);
    PolicyBatch {
        states,
        actions,
        log_probs,
        returns: advantages.clone(),
        advantages,
    }
}

#[test]
fn null_advantage_changes_nothing() {
    let (p, mut store) = policy(4, 2, 0.2, 9);
    let mut batch = synthetic_batch(&p, &store, 10, 64);
    batch.advantages = vec![0.0; batch.len()];
    let before = store.clone();
    let rep = policy_update(&p, &mut store, &batch, &UpdateConfig::default()).unwrap();
    assert!(!rep.accepted);
    assert_eq!(rep.grad_norm, 0.0);
    for id in before.ids() {
        assert_eq!(before.value(id), store.value(id));
    }
}

#[test]
fn accepted_steps_respect_the_kl_budget() {
    for (k, delta) in [0.001, 0.01, 0.1, 0.5].into_iter().enumerate() {
        let (p, mut store) = policy(4, 2, 0.2, 11 + k as u64);
        let cfg = UpdateConfig {
            delta_kl: delta,
            ..UpdateConfig::default()
        };
        let mut accepted = 0;
        for it in 0..10 {
            let batch = synthetic_batch(&p, &store, 100 + it, 128);
            let old = p.means(&store, &batch.states).unwrap();
            let rep = policy_update(&p, &mut store, &batch, &cfg).unwrap();
            let new = p.means(&store, &batch.states).unwrap();
            let kl: f64 = old
                .iter()
                .zip(&new)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| ((x - y) as f64).powi(2) / (2.0 * 0.04))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / old.len() as f64;
            if rep.accepted {
                accepted += 1;
                assert!(
                    rep.kl <= delta && kl <= delta * (1.0 + 1e-3),
                    "delta {delta}: {kl}"
                );
                assert!(rep.surrogate_gain > 0.0);
            } else {
                assert_eq!(kl, 0.0);
            }
        }
        assert!(accepted > 0);
    }
}

#[test]
fn bandit_reaches_the_optimum() {
    let (p, mut store) = policy(2, 1, 0.2, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let states = [vec![1.0, 0.0], vec![0.0, 1.0]];
    let best = [1.0f32, -1.0];
    let cfg = UpdateConfig::default();
    for _ in 0..200 {
        let mut batch = PolicyBatch::default();
        let mut rewards = [Vec::new(), Vec::new()];
        for i in 0..128 {
            let k = i % 2;
            let (a, lp) = p.sample_action(&store, &states[k], &mut rng).unwrap();
            rewards[k].push(-((a[0] - best[k]) as f64).powi(2));
            batch.states.push(states[k].clone());
            batch.actions.push(a);
            batch.log_probs.push(lp);
        }
        // Per-state mean reward as the baseline.
        let base: Vec<f64> = rewards
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        batch.advantages = (0..128)
            .map(|i| rewards[i % 2][i / 2] - base[i % 2])
            .collect();
        batch.returns = batch.advantages.clone();
        normalize(&mut batch.advantages);
        let rep = policy_update(&p, &mut store, &batch, &cfg).unwrap();
        assert!(!rep.accepted || rep.kl <= cfg.delta_kl);
    }
    for k in 0..2 {
        let hits = (0..10_000)
            .filter(|_| {
                let (a, _) = p.sample_action(&store, &states[k], &mut rng).unwrap();
                (a[0] - best[k]).abs() < 0.5
            })
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.95, "state {k}: {hits}");
    }
}

fn value_setup() -> (ValueFunction, ParameterStore, PolicyBatch) {
    let mut store = ParameterStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let v = ValueFunction::register(&mut store, 3, &MlpConfig::small(), &mut rng).unwrap();
    let states = random_states(&mut rng, 64, 3);
    let returns = states
        .iter()
        .map(|s| (2.0 * s[0] - s[1] * s[2] + 0.5) as f64)
        .collect();
    let batch = PolicyBatch {
        states,
        returns,
        ..PolicyBatch::default()
    };
    (v, store, batch)
}

#[test]
fn value_regression() {
    let (v, mut store, batch) = value_setup();
    let mut adam = Adam::new(&store, v.ids(), 1e-3);

    let before = store.clone();
    value_update(&v, &mut store, &mut adam, &batch, 0.0).unwrap();
    for id in before.ids() {
        assert_eq!(before.value(id), store.value(id));
    }

    let fitted = PolicyBatch {
        returns: v.predict(&store, &batch.states).unwrap(),
        ..batch.clone()
    };
    value_update(&v, &mut store, &mut adam, &fitted, 0.0).unwrap();
    for id in v.ids() {
        assert!(store.grad(id).data().iter().all(|&g| g == 0.0));
    }

    let mut adam = Adam::new(&store, v.ids(), 1e-3);
    let first = value_update(&v, &mut store, &mut adam, &batch, 0.0).unwrap();
    let mut last = first;
    for _ in 0..200 {
        last = value_update(&v, &mut store, &mut adam, &batch, 1e-3).unwrap();
    }
    assert!(last <= 0.2 * first, "{first} -> {last}");
}

#[test]
fn rollouts_keep_oracle_values_aside() {
    let clip = motion_library(4).remove(0);
    let mut env = ChainEnv::new(EnvConfig::default(), clip).unwrap();
    let (p, store) = policy(OBS_DIM, 3, 0.2, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let eps = collect(&mut env, &p, &store, 200, &mut rng).unwrap();
    assert!(eps.iter().map(|e| e.0.len()).sum::<usize>() >= 200);
    for (t, trace) in &eps {
        assert!(t.rewards.is_empty());
        assert_eq!(t.agent_frames.len(), t.len() + 1);
        assert_eq!(t.demo_frames.len(), t.len() + 1);
        assert_eq!(trace.oracle_rewards.len(), t.len());
        assert!(trace.oracle_rewards.iter().all(|&r| r > 0.0 && r <= 1.0));
    }
    let (t, _) = &eps[0];
    let (v_store, v) = {
        let mut s = store.clone();
        let mut r = ChaCha8Rng::seed_from_u64(17);
        let v = ValueFunction::register(&mut s, OBS_DIM, &MlpConfig::small(), &mut r).unwrap();
        (s, v)
    };
    assert!(PolicyBatch::from_trajectories(&[t], &v, &v_store, &UpdateConfig::default()).is_err());
}

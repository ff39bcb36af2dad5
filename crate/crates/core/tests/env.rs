use core::f32::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use virl_core::env::{
    class_separation, motion_library, oracle_reward, render, ChainEnv, EnvConfig, MotionClip,
    PoseState, J,
};
use virl_core::Error;

fn walk() -> MotionClip {
    motion_library(4).remove(0)
}

fn env(rsi: bool, warp: bool) -> ChainEnv {
    let cfg = EnvConfig {
        rsi,
        warp,
        ..EnvConfig::default()
    };
    ChainEnv::new(cfg, walk()).unwrap()
}

#[test]
fn rsi_off_starts_at_phase_zero_at_rest() {
    let mut e = env(false, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let obs = e.reset(&mut rng);
    assert_eq!(obs.pose.phase, 0.0);
    assert_eq!(obs.pose.angles, [0.0; J]);
}

#[test]
fn rsi_is_reproducible_and_matches_the_demo() {
    let mut a = env(true, false);
    let mut b = env(true, false);
    let oa = a.reset(&mut ChaCha8Rng::seed_from_u64(3));
    let ob = b.reset(&mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(oa, ob);
    assert_eq!(oa.frame, oa.demo_frame);
    assert!(oracle_reward(&oa.pose, &a.demo_pose()) > 0.999_999);
}

#[test]
fn rsi_phase_is_uniform() {
    let mut e = env(true, false);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut phases: Vec<f32> = (0..10_000).map(|_| e.reset(&mut rng).pose.phase).collect();
    phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = phases.len() as f64;
    let ks = phases
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            ((i + 1) as f64 / n - p as f64)
                .abs()
                .max((p as f64 - i as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.02, "KS {ks}");
}

#[test]
fn holding_the_pose_is_an_equilibrium() {
    let mut e = env(false, false);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    e.reset(&mut rng);
    for _ in 0..10 {
        let out = e.step(&[0.0; J]).unwrap();
        for j in 0..J {
            assert!(out.pose.angles[j].abs() <= 1e-6 && out.pose.velocities[j].abs() <= 1e-6);
        }
    }
}

#[test]
fn same_seed_and_actions_same_trajectory() {
    let run = || {
        let mut e = env(true, true);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        e.reset(&mut rng);
        let mut out = Vec::new();
        for t in 0..20 {
            let a = [0.1 * t as f32 / 20.0, 0.3, -0.4];
            out.push(e.step(&a).unwrap());
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn falling_over_terminates() {
    let mut e = env(false, false);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    e.reset(&mut rng);
    let mut ended = None;
    for t in 0..60 {
        let out = e.step(&[0.0, 3.0, 0.0]).unwrap();
        if out.done {
            assert!(out.info.terminated && !out.info.truncated);
            ended = Some(t);
            break;
        }
    }
    assert!(ended.is_some(), "the chain never reached the ground");
    assert!(e.step(&[0.0; J]).is_err());
}

#[test]
fn episodes_are_capped() {
    let mut e = env(false, false);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    e.reset(&mut rng);
    for t in 1..=60 {
        let out = e.step(&[0.0; J]).unwrap();
        assert_eq!(out.done, t == 60);
        if out.done {
            assert!(out.info.truncated);
        }
    }
}

#[test]
fn bad_actions_are_rejected() {
    let mut e = env(false, false);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    e.reset(&mut rng);
    assert_eq!(
        e.step(&[f32::NAN, 0.0, 0.0]).unwrap_err(),
        Error::NonFiniteAction
    );
    assert!(matches!(
        e.step(&[0.0, 0.0]),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        e.step(&[4.0, 0.0, 0.0]),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn zero_gains_keep_velocities_constant() {
    let cfg = EnvConfig {
        kp: 0.0,
        kd: 0.0,
        rsi: true,
        terminate_on_contact: false,
        ..EnvConfig::default()
    };
    let mut e = ChainEnv::new(cfg, walk()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let v0 = e.reset(&mut rng).pose.velocities;
    for _ in 0..20 {
        let out = e.step(&[1.0, -1.0, 0.5]).unwrap();
        assert_eq!(out.pose.velocities, v0);
    }
}

#[test]
fn demo_phase_follows_the_clock() {
    let mut e = env(true, true);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let obs = e.reset(&mut rng);
        let phi0 = obs.pose.phase as f64;
        let rate = e.clip().speed as f64 / 30.0;
        assert!((0.5..=2.0).contains(&e.clip().speed));
        for t in 1..=20 {
            let out = e.step(&[0.0; J]).unwrap();
            let want = (phi0 + t as f64 * rate).fract();
            let d = (out.info.demo_phase as f64 - want).abs();
            assert!(d.min(1.0 - d) < 1e-5);
            assert_eq!(
                out.demo_frame,
                render(&e.clip().pose(out.info.demo_phase), 32, 32)
            );
            if out.done {
                break;
            }
        }
    }
}

#[test]
fn render_is_deterministic_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let a = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let p = PoseState::from_joints(a, [0.0; J], 0.0);
        let f = render(&p, 32, 32);
        assert_eq!(f, render(&p, 32, 32));
        assert!(f.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(f.pixels().iter().any(|&v| v > 0.9));
    }
}

#[test]
fn joint_changes_show_up_in_pixels() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let a: [f32; J] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let j = rng.random_range(0..J);
        let mut b = a;
        b[j] += if rng.random::<bool>() { 0.21 } else { -0.21 };
        let fa = render(&PoseState::from_joints(a, [0.0; J], 0.0), 32, 32);
        let fb = render(&PoseState::from_joints(b, [0.0; J], 0.0), 32, 32);
        assert!(fa.max_abs_diff(&fb) >= 0.1, "{a:?} joint {j}");
    }
}

#[test]
fn oracle_reward_values() {
    let p = PoseState::from_joints([0.1, 0.2, -0.3], [0.0; J], 0.0);
    assert_eq!(oracle_reward(&p, &p), 1.0);
    let q = PoseState::from_joints([0.1 + PI, 0.2, -0.3], [0.0; J], 0.0);
    let want = (-2.0 * (PI as f64).powi(2)).exp();
    assert!((oracle_reward(&q, &p) - want).abs() < 1e-9);
    let mut prev = 1.0;
    for k in 1..30 {
        let q = PoseState::from_joints([0.1, 0.2 + 0.1 * k as f32, -0.3], [0.0; J], 0.0);
        let r = oracle_reward(&q, &p);
        assert!(r < prev);
        prev = r;
    }
}

#[test]
fn library_clips_are_periodic_distinct_and_upright() {
    for k in [2, 4, 6] {
        let lib = motion_library(k);
        assert_eq!(lib.len(), k);
        let mut ids: Vec<usize> = lib.iter().map(|c| c.class_id).collect();
        ids.dedup();
        assert_eq!(ids.len(), k);
        for c in &lib {
            let (a, b) = (c.angles64(0.0), c.angles64(1.0));
            for j in 0..J {
                assert!((a[j] - b[j]).abs() < 1e-9);
            }
            for i in 0..200 {
                let p = c.pose(i as f32 / 200.0);
                assert!(!p.touches_ground(), "{:?} at {i}", c.kind);
                assert!(p.root[1] > 0.1);
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                let d = class_separation(&lib[i], &lib[j], 1000);
                assert!(d >= 0.3, "{i} vs {j}: {d}");
            }
        }
    }
}

#[test]
fn rejects_bad_config() {
    let bad = EnvConfig {
        max_steps: 4,
        ..EnvConfig::default()
    };
    assert!(ChainEnv::new(bad, walk()).is_err());
    let bad = EnvConfig {
        control_rate: 0.0,
        ..EnvConfig::default()
    };
    assert!(ChainEnv::new(bad, walk()).is_err());
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use virl_core::autodiff::{grad_check, Adam, GradCheckOptions};
use virl_core::metric::{
    bernoulli_ce, build_loss, distance_profile, gaussian_kl, metric_train_step,
    reward_from_distance, shaped_reward, triplet_hinge, DistanceMode, MetricLossWeights,
    RewardKind, StepNoise,
};
use virl_core::nn::{MetricArch, MetricNet};
use virl_core::pairs::{LabeledPair, Provenance};
use virl_core::{Array, Error, Frame, Graph, Inputs, MotionSequence, ParameterStore};

const H: usize = 16;

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    Frame::new(H, H, (0..H * H).map(|_| rng.random::<f32>()).collect()).unwrap()
}

fn random_seq(rng: &mut ChaCha8Rng, len: usize) -> MotionSequence {
    MotionSequence::new((0..len).map(|_| random_frame(rng)).collect(), 0, 1.0)
}

fn net(seed: u64) -> (MetricNet, ParameterStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let net = MetricNet::register(&mut store, &MetricArch::with_frame(H, H), &mut rng).unwrap();
    (net, store)
}

fn pair(anchor: MotionSequence, other: MotionSequence, y: bool) -> LabeledPair {
    let provenance = if y {
        Provenance::SameClass
    } else {
        Provenance::CrossClass
    };
    LabeledPair {
        anchor,
        other,
        y,
        provenance,
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<LabeledPair> {
    (0..n)
        .map(|i| {
            let la = rng.random_range(2..6);
            let lo = rng.random_range(2..6);
            pair(random_seq(rng, la), random_seq(rng, lo), i % 2 == 0)
        })
        .collect()
}

/// Per-pair component values in evaluation mode.
fn components(
    net: &MetricNet,
    store: &ParameterStore,
    batch: &[LabeledPair],
    w: &MetricLossWeights,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut g = Graph::new();
    let n = build_loss(net, &mut g, batch, w, StepNoise::none(net, batch)).unwrap();
    g.forward(store, &Inputs::new()).unwrap();
    (
        g.value(n.triplet).data().to_vec(),
        g.value(n.vae).data().to_vec(),
        g.value(n.seq_ae).data().to_vec(),
    )
}

#[test]
fn hinge_formula() {
    assert_eq!(triplet_hinge(0.0, true, 1.0), 0.0);
    assert!((triplet_hinge(0.3, false, 1.0) - 0.7).abs() < 1e-12);
    assert_eq!(triplet_hinge(1.0, false, 1.0), 0.0);
    assert_eq!(triplet_hinge(2.5, false, 1.0), 0.0);
    assert_eq!(triplet_hinge(0.4, true, 1.0), 0.4);
}

#[test]
fn identical_positive_pair_has_zero_triplet_loss() {
    let (net, store) = net(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = random_seq(&mut rng, 4);
    let (t, _, _) = components(
        &net,
        &store,
        &[pair(s.clone(), s, true)],
        &MetricLossWeights::default(),
    );
    assert_eq!(t[0], 0.0);
}

#[test]
fn graph_triplet_matches_encoding_distance() {
    let (net, store) = net(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = random_batch(&mut rng, 6);
    let w = MetricLossWeights {
        margin: 2.0,
        ..MetricLossWeights::default()
    };
    let (t, _, _) = components(&net, &store, &batch, &w);
    for (i, p) in batch.iter().enumerate() {
        let a = net.encode_one(&store, &p.anchor).unwrap();
        let o = net.encode_one(&store, &p.other).unwrap();
        let mut fa = a.final_h().to_vec();
        fa.extend(a.mean_e());
        let mut fo = o.final_h().to_vec();
        fo.extend(o.mean_e());
        let d = fa
            .iter()
            .zip(&fo)
            .map(|(x, y)| ((x - y) as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let want = triplet_hinge(d, p.y, 2.0);
        assert!(
            (t[i] as f64 - want).abs() < 1e-4,
            "pair {i}: {} vs {want}",
            t[i]
        );
    }
}

#[test]
fn kl_closed_forms() {
    assert_eq!(gaussian_kl(&[0.0; 64], &[0.0; 64]), 0.0);
    let mut mu = vec![0.0; 64];
    mu[0] = 1.0;
    assert!((gaussian_kl(&mu, &[0.0; 64]) - 0.5).abs() < 1e-12);
}

#[test]
fn perfect_logits_give_target_entropy() {
    let x = [0.1f64, 0.5, 0.9, 0.25];
    let logits: Vec<f64> = x.iter().map(|p| (p / (1.0 - p)).ln()).collect();
    let h: f64 = x
        .iter()
        .map(|p| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
        .sum::<f64>()
        / 4.0;
    assert!((bernoulli_ce(&logits, &x) - h).abs() < 1e-12);
    // Any other logits do worse.
    let worse: Vec<f64> = logits.iter().map(|l| l + 0.3).collect();
    assert!(bernoulli_ce(&worse, &x) > h);
}

#[test]
fn vae_term_matches_closed_form() {
    let (net, store) = net(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_frame(&mut rng);
    let s = MotionSequence::new(vec![f.clone()], 0, 1.0);
    let batch = [pair(s.clone(), s, true)];
    let w = MetricLossWeights {
        beta: 0.7,
        ..MetricLossWeights::default()
    };
    let (_, v, _) = components(&net, &store, &batch, &w);

    let mut g = Graph::new();
    let x = g.constant(net.frames_array(&[&f]).unwrap());
    let out = net.conv.apply(&mut g, x, None);
    let (mu, lv) = net.vae.apply(&mut g, out.hidden);
    let logits = net.image_decoder.apply(&mut g, mu);
    g.forward(&store, &Inputs::new()).unwrap();
    let d = |n| {
        g.value(n)
            .data()
            .iter()
            .map(|&v: &f32| v as f64)
            .collect::<Vec<f64>>()
    };
    let target: Vec<f64> = f.pixels().iter().map(|&p| p as f64).collect();
    let want = 0.7 * gaussian_kl(&d(mu), &d(lv)) + bernoulli_ce(&d(logits), &target);
    assert!(
        (v[0] as f64 - want).abs() < 1e-4 * want.abs().max(1.0),
        "{} vs {want}",
        v[0]
    );
}

#[test]
fn losses_are_nonnegative() {
    let (net, store) = net(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch = random_batch(&mut rng, 8);
    let (t, v, s) = components(&net, &store, &batch, &MetricLossWeights::default());
    assert!(t.iter().chain(&v).chain(&s).all(|&x| x >= 0.0));
}

#[test]
fn seq_ae_is_invariant_to_batch_order() {
    let (net, store) = net(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = random_batch(&mut rng, 5);
    let mut rev = batch.clone();
    rev.reverse();
    let w = MetricLossWeights::default();
    let (_, _, a) = components(&net, &store, &batch, &w);
    let (_, _, b) = components(&net, &store, &rev, &w);
    let ma: f32 = a.iter().sum::<f32>() / 5.0;
    let mb: f32 = b.iter().sum::<f32>() / 5.0;
    assert!((ma - mb).abs() < 1e-6);
    for i in 0..5 {
        assert!((a[i] - b[4 - i]).abs() < 1e-6);
    }
}

#[test]
fn seq_autoencoder_halves_its_loss() {
    let (net, mut store) = net(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seqs: Vec<MotionSequence> = (0..8).map(|_| random_seq(&mut rng, 4)).collect();
    let batch: Vec<LabeledPair> = seqs
        .iter()
        .map(|s| pair(s.clone(), s.clone(), true))
        .collect();
    let w = MetricLossWeights {
        w_triplet: 0.0,
        w_vae: 0.0,
        w_seq_ae: 1.0,
        ..MetricLossWeights::default()
    };
    let ids = store.ids().collect();
    let mut adam = Adam::new(&store, ids, 1e-3);
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..500 {
        let r =
            metric_train_step(&net, &mut store, &mut adam, &batch, &w, &mut rng, false).unwrap();
        first.get_or_insert(r.seq_ae);
        last = r.seq_ae;
    }
    assert!(last <= 0.5 * first.unwrap(), "{first:?} -> {last}");
}

#[test]
fn zero_learning_rate_leaves_parameters() {
    let (net, mut store) = net(6);
    let before = store.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = random_batch(&mut rng, 4);
    let ids = store.ids().collect();
    let mut adam = Adam::new(&store, ids, 0.0);
    metric_train_step(
        &net,
        &mut store,
        &mut adam,
        &batch,
        &MetricLossWeights::default(),
        &mut rng,
        true,
    )
    .unwrap();
    for id in store.ids() {
        assert_eq!(store.value(id), before.value(id));
    }
}

#[test]
fn triplet_descends_on_a_fixed_batch() {
    let (net, mut store) = net(7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch = random_batch(&mut rng, 6);
    let w = MetricLossWeights {
        w_vae: 0.0,
        w_seq_ae: 0.0,
        ..MetricLossWeights::default()
    };
    let ids = store.ids().collect();
    let mut adam = Adam::new(&store, ids, 1e-4);
    let mut losses = Vec::new();
    for _ in 0..51 {
        losses.push(
            metric_train_step(&net, &mut store, &mut adam, &batch, &w, &mut rng, false)
                .unwrap()
                .triplet,
        );
    }
    let ok = losses.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(ok >= 45, "{ok} of 50 non-increasing: {losses:?}");
}

#[test]
fn total_gradient_is_weighted_sum_of_components() {
    let (net, mut store) = net(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let batch = random_batch(&mut rng, 3);
    let w = MetricLossWeights {
        w_triplet: 0.7,
        w_vae: 1.3,
        w_seq_ae: 0.4,
        ..MetricLossWeights::default()
    };
    let mut g = Graph::new();
    let n = build_loss(&net, &mut g, &batch, &w, StepNoise::none(&net, &batch)).unwrap();
    g.forward(&store, &Inputs::new()).unwrap();
    let grads = |g: &mut Graph, store: &mut ParameterStore, node, scale: f32| {
        store.zero_grad();
        g.backward(node, Array::filled(&[3], scale / 3.0), store)
            .unwrap();
        store
            .ids()
            .map(|id| store.grad(id).data().to_vec())
            .collect::<Vec<_>>()
    };
    let gt = grads(&mut g, &mut store, n.triplet, 0.7);
    let gv = grads(&mut g, &mut store, n.vae, 1.3);
    let gs = grads(&mut g, &mut store, n.seq_ae, 0.4);
    store.zero_grad();
    g.backward(n.total, Array::scalar(1.0), &mut store).unwrap();
    for (k, id) in store.ids().enumerate() {
        for (j, &v) in store.grad(id).data().iter().enumerate() {
            let want = gt[k][j] + gv[k][j] + gs[k][j];
            assert!(
                (v - want).abs() <= 1e-5 * want.abs().max(1.0),
                "{} [{j}]: {v} vs {want}",
                store.name(id)
            );
        }
    }
}

#[test]
fn non_finite_pixels_name_the_sample() {
    let (net, mut store) = net(9);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut batch = random_batch(&mut rng, 4);
    batch[2].anchor.frames[0].pixels_mut()[5] = f32::NAN;
    let ids = store.ids().collect();
    let mut adam = Adam::new(&store, ids, 1e-3);
    let before = store.clone();
    let r = metric_train_step(
        &net,
        &mut store,
        &mut adam,
        &batch,
        &MetricLossWeights::default(),
        &mut rng,
        true,
    );
    assert_eq!(r.unwrap_err(), Error::NonFiniteLoss { index: 2 });
    for id in store.ids() {
        assert_eq!(store.value(id), before.value(id));
    }
}

fn composed_grad_check<F: virl_core::math::Real>(eps: f64) -> f64 {
    let (net, store) = net(10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let batch: Vec<LabeledPair> = (0..2)
        .map(|i| pair(random_seq(&mut rng, 4), random_seq(&mut rng, 4), i == 0))
        .collect();
    let noise = StepNoise::sample(&net, &batch, &mut rng, true).cast::<F>();
    let mut store: ParameterStore<F> = store.cast();
    let mut g = Graph::<F>::new();
    let w = MetricLossWeights {
        margin: 3.0,
        ..MetricLossWeights::default()
    };
    let n = build_loss(&net, &mut g, &batch, &w, noise).unwrap();
    let opts = GradCheckOptions {
        eps,
        max_coords_per_param: Some(16),
        params: vec![],
    };
    let r = grad_check(&mut g, n.total, &mut store, &Inputs::new(), &opts, &mut rng).unwrap();
    assert_eq!(r.non_finite, 0);
    r.max_rel_error
}

#[test]
fn composed_loss_passes_grad_check_f32() {
    // Larger steps cross relu kinks when a conv bias moves many units at once.
    let err = composed_grad_check::<f32>(1e-3);
    assert!(err <= 1e-3, "{err:e}");
}

#[test]
fn composed_loss_passes_grad_check_f64() {
    let err = composed_grad_check::<f64>(1e-5);
    assert!(err <= 1e-3, "{err:e}");
}

#[test]
fn identical_sequences_have_zero_profile() {
    let (net, store) = net(11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_seq(&mut rng, 6);
    let e = net.encode(&store, &[&s, &s.clone()]).unwrap();
    let p = distance_profile(&e[0], &e[1]).unwrap();
    assert!(p.d.iter().chain(&p.d_e).chain(&p.d_h).all(|&v| v == 0.0));
}

#[test]
fn profile_is_symmetric_and_mode_selects() {
    let (net, store) = net(12);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = random_seq(&mut rng, 5);
    let b = random_seq(&mut rng, 5);
    let e = net.encode(&store, &[&a, &b]).unwrap();
    let ab = distance_profile(&e[0], &e[1]).unwrap();
    let ba = distance_profile(&e[1], &e[0]).unwrap();
    assert_eq!(ab, ba);
    for t in 0..5 {
        assert!(ab.d_e[t] >= 0.0 && ab.d_h[t] >= 0.0);
        assert_eq!(ab.d[t], ab.d_e[t] + ab.d_h[t]);
    }
    assert_eq!(ab.select(DistanceMode::Spatial), &ab.d_e[..]);
    assert_eq!(ab.select(DistanceMode::Temporal), &ab.d_h[..]);
    assert_eq!(ab.select(DistanceMode::Combined), &ab.d[..]);
    let short = random_seq(&mut rng, 3);
    let es = net.encode_one(&store, &short).unwrap();
    assert_eq!(
        distance_profile(&e[0], &es).unwrap_err(),
        Error::LengthMismatch(5, 3)
    );
}

#[test]
fn reversal_moves_the_temporal_encoding() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..100 {
        let (net, store) = net(100 + seed);
        let s = random_seq(&mut rng, 8);
        let mut r = s.clone();
        r.frames.reverse();
        let e = net.encode(&store, &[&s, &r]).unwrap();
        let p = distance_profile(&e[0], &e[1]).unwrap();
        assert!(p.d_h.iter().sum::<f64>() > 0.0, "seed {seed}");
    }
}

#[test]
fn shaped_reward_values() {
    assert_eq!(shaped_reward(0.0, -5.0), 1.0);
    assert!((shaped_reward(1.0, -5.0) - (-5.0f64).exp()).abs() < 1e-9);
    assert!((shaped_reward(1.0, -5.0) - 0.006738).abs() < 1e-6);
    let mut prev = 1.0;
    for i in 1..100 {
        let r = shaped_reward(i as f64 * 0.05, -5.0);
        assert!(r < prev && r > 0.0);
        prev = r;
    }
    assert_eq!(reward_from_distance(0.3, RewardKind::NegDist, -5.0), -0.3);
    assert_eq!(reward_from_distance(0.0, RewardKind::Normalized, -5.0), 1.0);
}

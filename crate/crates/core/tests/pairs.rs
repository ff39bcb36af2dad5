use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use virl_core::pairs::{
    add_noise, build_batch, crop_window, eesp_crop_start, eesp_probabilities, make_negative,
    make_positive, BatchSpec, CropSpec, Episode, ExperienceMemory, NegativeRule, PositiveRule,
    Provenance, NOISE_VARIANCE,
};
use virl_core::{Error, Frame, MotionSequence};

fn flat(v: f32) -> Frame {
    Frame::new(2, 2, vec![v; 4]).unwrap()
}

fn indexed(len: usize, base: f32) -> MotionSequence {
    MotionSequence::new(
        (0..len).map(|i| flat(base + i as f32 / 1000.0)).collect(),
        0,
        1.0,
    )
}

fn random_seq(rng: &mut ChaCha8Rng, len: usize) -> MotionSequence {
    let frames = (0..len)
        .map(|_| Frame::new(3, 3, (0..9).map(|_| rng.random::<f32>()).collect()).unwrap())
        .collect();
    MotionSequence::new(frames, 0, 1.0)
}

fn pixels(seq: &MotionSequence) -> Vec<Vec<u32>> {
    let mut v: Vec<Vec<u32>> = seq
        .frames
        .iter()
        .map(|f| f.pixels().iter().map(|p| p.to_bits()).collect())
        .collect();
    v.sort();
    v
}

#[test]
fn noise_with_zero_draws_is_identity() {
    let s = indexed(5, 0.2);
    assert_eq!(add_noise(&s, NOISE_VARIANCE, || 0.0), s);
}

#[test]
fn noise_variance_is_two_hundredths() {
    assert_eq!(NOISE_VARIANCE, 0.02);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let s = MotionSequence::new(
        vec![Frame::new(100, 100, vec![0.5; 10_000]).unwrap(); 4],
        0,
        1.0,
    );
    let p = make_positive(&s, &mut rng, PositiveRule::Noise).unwrap();
    let d: Vec<f64> = p
        .other
        .frames
        .iter()
        .flat_map(|f| f.pixels().iter().map(|&v| v as f64 - 0.5))
        .collect();
    let var = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
    // Clamping at 0 and 1 is 3.5 sigma away and barely moves the estimate.
    assert!((var - 0.02).abs() < 0.0005, "{var}");
}

#[test]
fn dup_rules_shift_by_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = indexed(3, 0.1);
    let f = &s.frames;
    let p = make_positive(&s, &mut rng, PositiveRule::DupFirst).unwrap();
    assert_eq!(
        p.other.frames,
        vec![f[0].clone(), f[0].clone(), f[1].clone()]
    );
    let p = make_positive(&s, &mut rng, PositiveRule::DupLast).unwrap();
    assert_eq!(
        p.other.frames,
        vec![f[1].clone(), f[2].clone(), f[2].clone()]
    );
    assert_eq!(p.anchor, s);
}

#[test]
fn desync_offsets_by_one_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = indexed(5, 0.1);
    let p = make_positive(&s, &mut rng, PositiveRule::Desync).unwrap();
    assert_eq!(p.anchor.frames, s.frames[1..].to_vec());
    assert_eq!(p.other.frames, s.frames[..4].to_vec());
}

#[test]
fn reverse_and_replicate_definitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = indexed(3, 0.1);
    let n = make_negative(&s, &mut rng, NegativeRule::Reverse).unwrap();
    assert_eq!(
        n.other.frames,
        vec![
            s.frames[2].clone(),
            s.frames[1].clone(),
            s.frames[0].clone()
        ]
    );
    let n = make_negative(&s, &mut rng, NegativeRule::ReplicateRandom).unwrap();
    assert_eq!(n.other.len(), 3);
    assert!(n.other.frames.iter().all(|f| *f == n.other.frames[0]));
}

#[test]
fn short_and_constant_inputs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let one = indexed(1, 0.1);
    assert!(matches!(
        make_positive(&one, &mut rng, PositiveRule::Desync),
        Err(Error::TooShort { .. })
    ));
    assert!(matches!(
        make_positive(&one, &mut rng, PositiveRule::DupFirst),
        Err(Error::TooShort { .. })
    ));
    assert!(make_positive(&one, &mut rng, PositiveRule::Noise).is_ok());
    let constant = MotionSequence::new(vec![flat(0.3); 5], 0, 1.0);
    for rule in [
        NegativeRule::Reverse,
        NegativeRule::ShuffleOne,
        NegativeRule::ShuffleBoth,
    ] {
        assert_eq!(
            make_negative(&constant, &mut rng, rule).unwrap_err(),
            Error::DegenerateSequence
        );
    }
    let palindrome = MotionSequence::new(vec![flat(0.1), flat(0.9), flat(0.1)], 0, 1.0);
    assert_eq!(
        make_negative(&palindrome, &mut rng, NegativeRule::Reverse).unwrap_err(),
        Error::DegenerateSequence
    );
}

#[test]
fn augmentation_properties_on_random_sequences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let len = rng.random_range(2..12);
        let s = random_seq(&mut rng, len);
        for rule in NegativeRule::ALL {
            let n = make_negative(&s, &mut rng, rule).unwrap();
            assert_eq!(n.other.len(), len);
            assert_eq!(n.anchor.len(), len);
            assert!(!n.other.approx_eq(&n.anchor, 1e-6), "{rule:?}");
            if rule != NegativeRule::ShuffleBoth {
                assert!(!n.other.approx_eq(&s, 1e-6), "{rule:?}");
            }
            if matches!(rule, NegativeRule::ShuffleOne | NegativeRule::ShuffleBoth) {
                assert_eq!(pixels(&n.other), pixels(&s));
                assert_eq!(pixels(&n.anchor), pixels(&s));
            }
        }
        for rule in PositiveRule::ALL {
            let p = make_positive(&s, &mut rng, rule).unwrap();
            let want = if rule == PositiveRule::Desync {
                len - 1
            } else {
                len
            };
            assert_eq!((p.anchor.len(), p.other.len()), (want, want), "{rule:?}");
        }
    }
}

#[test]
fn eesp_exact_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        assert_eq!(eesp_crop_start(1, &mut rng), 0);
    }
    let p = eesp_probabilities(4);
    for (a, b) in p.iter().zip([0.4, 0.3, 0.2, 0.1]) {
        assert!((a - b).abs() < 1e-12);
    }
    for l in [2, 4, 16, 37] {
        let p = eesp_probabilities(l);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.windows(2).all(|w| w[0] > w[1]));
    }
}

#[test]
fn eesp_frequencies_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for l in [2, 4, 16] {
        let mut counts = vec![0usize; l];
        let n = 100_000;
        for _ in 0..n {
            counts[eesp_crop_start(l, &mut rng)] += 1;
        }
        for (i, p) in eesp_probabilities(l).iter().enumerate() {
            let f = counts[i] as f64 / n as f64;
            assert!((f - p).abs() <= 0.01, "L={l} i={i}: {f} vs {p}");
        }
    }
}

fn episode(len: usize) -> Episode {
    Episode::new(indexed(len, 0.0), indexed(len, 0.5), 0).unwrap()
}

#[test]
fn minimal_episode_is_returned_whole() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let e = episode(4);
    let (a, d) = crop_window(&e, &mut rng, CropSpec::default()).unwrap();
    assert_eq!(a, e.agent);
    assert_eq!(d, e.demo);
    assert!(matches!(
        crop_window(&episode(3), &mut rng, CropSpec::default()),
        Err(Error::TooShort { need: 4, got: 3 })
    ));
}

#[test]
fn crops_are_synchronized_and_favour_short_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let e = episode(20);
    let mut hist = vec![0usize; 21];
    for _ in 0..100_000 {
        let (a, d) = crop_window(&e, &mut rng, CropSpec::default()).unwrap();
        assert_eq!(a.len(), d.len());
        let start = (a.frames[0].pixels()[0] * 1000.0).round() as usize;
        let dstart = ((d.frames[0].pixels()[0] - 0.5) * 1000.0).round() as usize;
        assert_eq!(start, dstart);
        assert!(start + a.len() <= 20 && a.len() >= 4);
        hist[a.len()] += 1;
    }
    assert!(hist[4..].windows(2).all(|w| w[0] >= w[1]), "{hist:?}");
}

#[test]
fn memory_is_fifo() {
    let mut m = ExperienceMemory::new(5);
    for i in 0..8 {
        m.push(Episode::new(indexed(4, i as f32 / 10.0), indexed(4, 0.0), i).unwrap());
    }
    assert_eq!(m.len(), 5);
    let ids: Vec<usize> = m.iter().map(|e| e.class_id).collect();
    assert_eq!(ids, vec![3, 4, 5, 6, 7]);
    assert_eq!(ExperienceMemory::default().capacity(), 200);
}

fn library() -> Vec<MotionSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    (0..6)
        .map(|i| {
            let mut s = random_seq(&mut rng, 10);
            s.class_id = i % 2;
            s
        })
        .collect()
}

#[test]
fn empty_memory_falls_back_to_class_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lib = library();
    let b = build_batch(
        &ExperienceMemory::default(),
        &lib,
        &BatchSpec::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(b.len(), 16);
    for p in &b {
        assert!(!p.provenance.is_augmentation());
        let same = p.anchor.class_id == p.other.class_id;
        assert_eq!(p.y, same);
        assert_eq!(
            p.provenance,
            if same {
                Provenance::SameClass
            } else {
                Provenance::CrossClass
            }
        );
    }
}

#[test]
fn no_sources_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let r = build_batch(
        &ExperienceMemory::default(),
        &[],
        &BatchSpec::default(),
        &mut rng,
    );
    assert_eq!(r.unwrap_err(), Error::EmptySources);
}

#[test]
fn default_mix_is_half_augmentation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mem = ExperienceMemory::default();
    for _ in 0..5 {
        let a = random_seq(&mut rng, 12);
        let d = random_seq(&mut rng, 12);
        mem.push(Episode::new(a, d, 0).unwrap());
    }
    let lib = library();
    let spec = BatchSpec {
        pairs: 10_000,
        ..BatchSpec::default()
    };
    let b = build_batch(&mem, &lib, &spec, &mut rng).unwrap();
    assert_eq!(b.len(), 10_000);
    let aug = b.iter().filter(|p| p.provenance.is_augmentation()).count() as f64 / 10_000.0;
    assert!((aug - 0.5).abs() <= 0.02, "{aug}");
    for p in &b {
        assert_eq!(p.y, p.provenance.positive());
        assert!(p.provenance.tag().contains(':'));
    }
}

#[test]
fn constant_anchors_use_a_foreign_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut mem = ExperienceMemory::default();
    let c = MotionSequence::new(vec![flat(0.2); 6], 0, 1.0);
    mem.push(Episode::new(c.clone(), c, 0).unwrap());
    mem.push(Episode::new(indexed(6, 0.7), indexed(6, 0.7), 0).unwrap());
    let spec = BatchSpec {
        pairs: 400,
        ..BatchSpec::default()
    };
    let b = build_batch(&mem, &[], &spec, &mut rng).unwrap();
    let foreign: Vec<_> = b
        .iter()
        .filter(|p| p.provenance == Provenance::ReplicateOther)
        .collect();
    assert!(!foreign.is_empty());
    for p in foreign {
        assert!(!p.y);
        assert!(!p.other.approx_eq(&p.anchor, 1e-6));
    }
}

proptest! {
    #[test]
    fn negatives_never_echo_their_input(seed in any::<u64>(), len in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_seq(&mut rng, len);
        for rule in [NegativeRule::Reverse, NegativeRule::ReplicateRandom, NegativeRule::ShuffleOne] {
            let n = make_negative(&s, &mut rng, rule).unwrap();
            prop_assert!(!n.other.approx_eq(&s, 1e-6));
        }
    }
}

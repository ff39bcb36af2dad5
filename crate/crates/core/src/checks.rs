//! Finite-difference checks over every graph primitive, the composed metric
//! loss and the policy log density. Everything runs in f64 on the same
//! generic kernels used for f32 training.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{grad_check, Array, GradCheckOptions, Graph, Inputs, NodeId, ParameterStore};
use crate::frame::{Frame, MotionSequence};
use crate::metric::{build_loss, MetricLossWeights, StepNoise};
use crate::nn::{MetricArch, MetricNet};
use crate::pairs::{LabeledPair, Provenance};
use crate::rl::{GaussianPolicy, MlpConfig};
use crate::rng::{derive, StreamRng};
use crate::Result;

pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const COMPOSED_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tol: f64,
    pub non_finite: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.non_finite == 0 && self.max_rel_error <= self.tol
    }
}

type Leaves = fn(&mut StreamRng) -> Vec<Array>;
type Build = fn(&mut Graph<f64>, &[NodeId]) -> NodeId;

struct Case {
    name: &'static str,
    leaves: Leaves,
    build: Build,
}

fn uniform(rng: &mut StreamRng, shape: &[usize], lo: f32, hi: f32) -> Array {
    let n = shape.iter().product();
    Array::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .expect("sized")
}

fn u(rng: &mut StreamRng, shape: &[usize]) -> Array {
    uniform(rng, shape, -1.0, 1.0)
}

/// relu inputs stay clear of the kink.
fn off_zero(rng: &mut StreamRng, shape: &[usize]) -> Array {
    let mut a = u(rng, shape);
    for v in a.data_mut() {
        if v.abs() < 0.05 {
            *v = if *v < 0.0 { -0.05 } else { 0.05 };
        }
    }
    a
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "matmul",
            leaves: |r| vec![u(r, &[3, 4]), u(r, &[4, 2])],
            build: |g, p| g.matmul(p[0], p[1]),
        },
        Case {
            name: "add",
            leaves: |r| vec![u(r, &[2, 3]), u(r, &[2, 3])],
            build: |g, p| g.add(p[0], p[1]),
        },
        Case {
            name: "sub",
            leaves: |r| vec![u(r, &[2, 3]), u(r, &[2, 3])],
            build: |g, p| g.sub(p[0], p[1]),
        },
        Case {
            name: "mul",
            leaves: |r| vec![u(r, &[5]), u(r, &[5])],
            build: |g, p| g.mul(p[0], p[1]),
        },
        Case {
            name: "add_row",
            leaves: |r| vec![u(r, &[3, 4]), u(r, &[4])],
            build: |g, p| g.add_row(p[0], p[1]),
        },
        Case {
            name: "affine",
            leaves: |r| vec![u(r, &[6])],
            build: |g, p| g.affine(p[0], -1.7, 0.3),
        },
        Case {
            name: "relu",
            leaves: |r| vec![off_zero(r, &[8])],
            build: |g, p| g.relu(p[0]),
        },
        Case {
            name: "sigmoid",
            leaves: |r| vec![uniform(r, &[8], -3.0, 3.0)],
            build: |g, p| g.sigmoid(p[0]),
        },
        Case {
            name: "tanh",
            leaves: |r| vec![uniform(r, &[8], -2.0, 2.0)],
            build: |g, p| g.tanh(p[0]),
        },
        Case {
            name: "exp",
            leaves: |r| vec![u(r, &[6])],
            build: |g, p| g.exp(p[0]),
        },
        Case {
            name: "log",
            leaves: |r| vec![uniform(r, &[6], 1.0, 2.0)],
            build: |g, p| g.log(p[0]),
        },
        Case {
            name: "square",
            leaves: |r| vec![uniform(r, &[6], -1.5, 1.5)],
            build: |g, p| g.square(p[0]),
        },
        Case {
            name: "softplus",
            leaves: |r| vec![uniform(r, &[6], -3.0, 3.0)],
            build: |g, p| g.softplus(p[0]),
        },
        Case {
            name: "sum",
            leaves: |r| vec![u(r, &[2, 5])],
            build: |g, p| g.sum(p[0]),
        },
        Case {
            name: "mean",
            leaves: |r| vec![u(r, &[2, 5])],
            build: |g, p| g.mean(p[0]),
        },
        Case {
            name: "sum_last",
            leaves: |r| vec![u(r, &[3, 4])],
            build: |g, p| g.sum_last(p[0]),
        },
        Case {
            name: "concat",
            leaves: |r| vec![u(r, &[2, 3]), u(r, &[2, 2])],
            build: |g, p| g.concat(&[p[0], p[1]], 1),
        },
        Case {
            name: "slice",
            leaves: |r| vec![u(r, &[3, 6])],
            build: |g, p| g.slice(p[0], 1, 2, 3),
        },
        Case {
            name: "reshape",
            leaves: |r| vec![u(r, &[2, 6])],
            build: |g, p| g.reshape(p[0], &[3, 4]),
        },
        Case {
            name: "gather_rows",
            leaves: |r| vec![u(r, &[4, 3])],
            build: |g, p| g.gather_rows(p[0], vec![3, 0, 3, 1]),
        },
        Case {
            name: "broadcast_rows",
            leaves: |r| vec![u(r, &[3])],
            build: |g, p| g.broadcast_rows(p[0], 4),
        },
        Case {
            name: "l2_norm",
            leaves: |r| vec![u(r, &[3, 4])],
            build: |g, p| g.l2_norm(p[0]),
        },
        Case {
            name: "dropout",
            leaves: |r| vec![u(r, &[2, 5])],
            build: |g, p| {
                let m = vec![1.25, 0.0, 1.25, 1.25, 0.0, 1.25, 1.25, 0.0, 1.25, 1.25];
                let mask = g.constant(Array::new(vec![2, 5], m).expect("sized"));
                g.dropout(p[0], mask)
            },
        },
        Case {
            name: "conv2d",
            leaves: |r| vec![u(r, &[2, 2, 7, 6]), u(r, &[3, 2, 3, 2]), u(r, &[3])],
            build: |g, p| g.conv2d(p[0], p[1], p[2], 2),
        },
        Case {
            name: "conv_transpose2d",
            leaves: |r| vec![u(r, &[2, 3, 3, 2]), u(r, &[3, 2, 4, 3]), u(r, &[2])],
            build: |g, p| g.conv_transpose2d(p[0], p[1], p[2], 2),
        },
    ]
}

/// `sum(op(leaves) * w)` for a random projection `w`, every coordinate checked.
fn check_case(case: &Case, rng: &mut StreamRng) -> Result<(f64, usize)> {
    let mut store = ParameterStore::<f64>::new();
    let mut g = Graph::<f64>::new();
    let mut nodes = Vec::new();
    for (i, a) in (case.leaves)(rng).into_iter().enumerate() {
        let id = store.insert(&format!("p{i}"), a.cast())?;
        nodes.push(g.param(id));
    }
    let y = (case.build)(&mut g, &nodes);
    g.forward(&store, &Inputs::new())?;
    let shape = g.value(y).shape().to_vec();
    let w = g.constant(u(rng, &shape).cast());
    let prod = g.mul(y, w);
    let loss = g.sum(prod);
    let opts = GradCheckOptions {
        eps: 1e-5,
        max_coords_per_param: None,
        params: Vec::new(),
    };
    let rep = grad_check(&mut g, loss, &mut store, &Inputs::new(), &opts, rng)?;
    Ok((rep.max_rel_error, rep.non_finite))
}

/// Worst error per primitive over `instances` random instances.
pub fn primitive_checks(seed: u64, instances: usize) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (k, case) in cases().iter().enumerate() {
        let mut rng = derive(seed, 0x6000 + k as u64);
        let (mut worst, mut bad) = (0.0f64, 0);
        for _ in 0..instances {
            let (e, nf) = check_case(case, &mut rng)?;
            worst = worst.max(e);
            bad += nf;
        }
        out.push(CheckResult {
            name: format!("primitive {}", case.name),
            max_rel_error: worst,
            tol: PRIMITIVE_TOL,
            non_finite: bad,
        });
    }
    Ok(out)
}

fn random_seq(rng: &mut StreamRng, len: usize, h: usize) -> MotionSequence {
    let frames = (0..len)
        .map(|_| {
            Frame::new(h, h, (0..h * h).map(|_| rng.random::<f32>()).collect()).expect("sized")
        })
        .collect();
    MotionSequence::new(frames, 0, 1.0)
}

/// Triplet + VAE + sequence-AE loss of a freshly initialized metric on a
/// positive and a negative pair of 16x16 sequences.
pub fn composed_loss_check(seed: u64) -> Result<CheckResult> {
    const H: usize = 16;
    let mut rng = derive(seed, 0x7000);
    let mut store = ParameterStore::new();
    let net = MetricNet::register(&mut store, &MetricArch::with_frame(H, H), &mut rng)?;
    let batch: Vec<LabeledPair> = [true, false]
        .into_iter()
        .map(|y| LabeledPair {
            anchor: random_seq(&mut rng, 4, H),
            other: random_seq(&mut rng, 4, H),
            y,
            provenance: if y {
                Provenance::SameClass
            } else {
                Provenance::CrossClass
            },
        })
        .collect();
    let noise = StepNoise::sample(&net, &batch, &mut rng, true).cast::<f64>();
    let mut store = store.cast::<f64>();
    let mut g = Graph::<f64>::new();
    // A wide margin keeps the negative pair inside the hinge.
    let w = MetricLossWeights {
        margin: 3.0,
        ..MetricLossWeights::default()
    };
    let nodes = build_loss(&net, &mut g, &batch, &w, noise)?;
    let opts = GradCheckOptions {
        eps: 1e-5,
        max_coords_per_param: Some(16),
        params: Vec::new(),
    };
    let rep = grad_check(
        &mut g,
        nodes.total,
        &mut store,
        &Inputs::new(),
        &opts,
        &mut rng,
    )?;
    Ok(CheckResult {
        name: "composed metric loss".into(),
        max_rel_error: rep.max_rel_error,
        tol: COMPOSED_TOL,
        non_finite: rep.non_finite,
    })
}

/// Summed log density of random actions under a fresh policy.
pub fn policy_log_prob_check(seed: u64) -> Result<CheckResult> {
    let mut rng = derive(seed, 0x8000);
    let mut store = ParameterStore::new();
    let (obs, act, n) = (10, 3, 8);
    let policy =
        GaussianPolicy::register(&mut store, obs, act, &MlpConfig::small(), 0.3, &mut rng)?;
    let mut store = store.cast::<f64>();
    let inputs = Inputs::new()
        .with("s", u(&mut rng, &[n, obs]).cast())
        .with("a", u(&mut rng, &[n, act]).cast());
    let mut g = Graph::<f64>::new();
    let s = g.input("s");
    let a = g.input("a");
    let lp = policy.log_prob_node(&mut g, s, a, n);
    let total = g.sum(lp);
    let opts = GradCheckOptions {
        eps: 1e-6,
        max_coords_per_param: Some(32),
        params: Vec::new(),
    };
    let rep = grad_check(&mut g, total, &mut store, &inputs, &opts, &mut rng)?;
    Ok(CheckResult {
        name: "policy log-prob".into(),
        max_rel_error: rep.max_rel_error,
        tol: COMPOSED_TOL,
        non_finite: rep.non_finite,
    })
}

/// Every check above.
pub fn full_suite(seed: u64, instances: usize) -> Result<Vec<CheckResult>> {
    let mut out = primitive_checks(seed, instances)?;
    out.push(composed_loss_check(seed)?);
    out.push(policy_log_prob_check(seed)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_few_instances_pass() {
        for r in full_suite(3, 3).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
    }
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Adam, Array, Graph, Inputs, NodeId, ParameterStore, NORM_EPS};
use crate::frame::MotionSequence;
use crate::math::{self, Real};
use crate::nn::MetricNet;
use crate::pairs::LabeledPair;
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricLossWeights {
    pub w_triplet: f32,
    /// Weight of the whole VAE term in the total loss.
    pub w_vae: f32,
    /// KL weight inside the VAE term.
    pub beta: f32,
    pub w_seq_ae: f32,
    /// Hinge margin for negative pairs.
    pub margin: f32,
    /// Reward width, negative.
    pub w_d: f64,
}

impl Default for MetricLossWeights {
    fn default() -> Self {
        Self {
            w_triplet: 1.0,
            w_vae: 1.0,
            beta: 1e-3,
            w_seq_ae: 0.1,
            margin: 1.0,
            w_d: -5.0,
        }
    }
}

impl MetricLossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = self.margin > 0.0
            && self.w_d < 0.0
            && self.w_triplet >= 0.0
            && self.w_vae >= 0.0
            && self.beta >= 0.0
            && self.w_seq_ae >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "bad metric weights {self:?}"
            )))
        }
    }
}

/// `d` for a positive pair, `max(rho - d, 0)` for a negative one.
pub fn triplet_hinge(d: f64, y: bool, rho: f64) -> f64 {
    if y {
        d
    } else {
        (rho - d).max(0.0)
    }
}

/// `KL(N(mu, exp(log_var)) || N(0, I))`, summed over dimensions.
pub fn gaussian_kl(mu: &[f64], log_var: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_var)
        .map(|(m, lv)| m * m + math::exp64(*lv) - 1.0 - lv)
        .sum::<f64>()
}

/// Mean per-pixel Bernoulli cross-entropy of `targets` under `logits`.
pub fn bernoulli_ce(logits: &[f64], targets: &[f64]) -> f64 {
    let s: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&l, &x)| l.max(0.0) + math::ln64(1.0 + math::exp64(-l.abs())) - x * l)
        .sum();
    s / logits.len() as f64
}

/// Randomness consumed by one loss evaluation, drawn up front so the graph
/// is a pure function of the parameters.
#[derive(Clone, Debug)]
pub struct StepNoise<T = f32> {
    pub dropout: Option<Array<T>>,
    /// Standard normal draws for the VAE, `[anchor frames, embed]`.
    pub vae: Array<T>,
}

fn anchor_frames(batch: &[LabeledPair]) -> usize {
    batch.iter().map(|p| p.anchor.len()).sum()
}

fn total_frames(batch: &[LabeledPair]) -> usize {
    batch.iter().map(|p| p.anchor.len() + p.other.len()).sum()
}

impl StepNoise<f32> {
    pub fn sample<R: Rng + ?Sized>(
        net: &MetricNet,
        batch: &[LabeledPair],
        rng: &mut R,
        dropout: bool,
    ) -> Self {
        let mask = dropout.then(|| net.dropout_mask(rng, total_frames(batch)));
        let na = anchor_frames(batch);
        let vae = Array::new(
            vec![na, net.arch.embed],
            rng::normal_vec(rng, na * net.arch.embed),
        )
        .expect("sized");
        Self { dropout: mask, vae }
    }

    /// No dropout and `z = mu`.
    pub fn none(net: &MetricNet, batch: &[LabeledPair]) -> Self {
        Self {
            dropout: None,
            vae: Array::zeros(&[anchor_frames(batch), net.arch.embed]),
        }
    }

    pub fn cast<U: Real>(&self) -> StepNoise<U> {
        StepNoise {
            dropout: self.dropout.as_ref().map(|m| m.cast()),
            vae: self.vae.cast(),
        }
    }
}

/// Nodes of the composed metric loss. Per-pair vectors are `[P]`.
#[derive(Clone, Debug)]
pub struct LossNodes {
    pub triplet: NodeId,
    pub vae: NodeId,
    pub seq_ae: NodeId,
    pub per_pair: NodeId,
    pub total: NodeId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub triplet: f64,
    pub vae: f64,
    pub seq_ae: f64,
    pub total: f64,
}

fn constant<T: Real>(g: &mut Graph<T>, shape: Vec<usize>, data: Vec<f64>) -> NodeId {
    let a = Array::new(shape, data.into_iter().map(T::from_f64).collect()).expect("sized");
    g.constant(a)
}

/// Builds the weighted sum of the triplet hinge, the per-frame VAE loss and
/// the sequence-autoencoder loss over `batch`. The VAE and sequence
/// autoencoder see anchors only. The total is the mean over pairs.
pub fn build_loss<T: Real>(
    net: &MetricNet,
    g: &mut Graph<T>,
    batch: &[LabeledPair],
    w: &MetricLossWeights,
    noise: StepNoise<T>,
) -> Result<LossNodes> {
    if batch.is_empty() {
        return Err(Error::EmptySequence);
    }
    let p = batch.len();
    let mut seqs: Vec<&MotionSequence> = batch.iter().map(|x| &x.anchor).collect();
    seqs.extend(batch.iter().map(|x| &x.other));
    let enc = net.encode_batch(g, &seqs, noise.dropout)?;

    // Triplet hinge on concat(h_T, mean e).
    let f = enc.combined(g);
    let fa = g.gather_rows(f, (0..p).collect());
    let fo = g.gather_rows(f, (p..2 * p).collect());
    let diff = g.sub(fa, fo);
    let norm = g.l2_norm(diff);
    // Remove the smoothing offset so identical encodings are exactly 0 apart.
    let d = g.affine(norm, 1.0, -math::sqrt(NORM_EPS));
    let y: Vec<f64> = batch.iter().map(|x| if x.y { 1.0 } else { 0.0 }).collect();
    let ny: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
    let y = constant(g, vec![p], y);
    let ny = constant(g, vec![p], ny);
    let pos = g.mul(y, d);
    let gap = g.affine(d, -1.0, w.margin);
    let hinge = g.relu(gap);
    let neg = g.mul(ny, hinge);
    let triplet = g.add(pos, neg);

    // VAE on anchor frames. Anchors come first, so their frames are the
    // leading rows of the conv outputs.
    let na: usize = enc.lens[..p].iter().sum();
    let hidden = g.slice(enc.conv.hidden, 0, 0, na);
    let (mu, log_var) = net.vae.apply(g, hidden);
    let eps = g.constant(noise.vae);
    let z = net.vae.sample(g, mu, log_var, eps);
    let logits = net.image_decoder.apply(g, z);
    let target = g.slice(enc.frames, 0, 0, na);
    let sp = g.softplus(logits);
    let xl = g.mul(target, logits);
    let ce = g.sub(sp, xl);
    let pixels = net.arch.frame_h * net.arch.frame_w;
    let ce = g.reshape(ce, &[na, pixels]);
    let ce = g.sum_last(ce);
    let ce = g.scale(ce, 1.0 / pixels as f32);
    let mu2 = g.square(mu);
    let var = g.exp(log_var);
    let q = g.add(mu2, var);
    let q = g.sub(q, log_var);
    let q = g.sum_last(q);
    let kl = g.affine(q, 0.5, -0.5 * net.arch.embed as f32);
    let kl = g.scale(kl, w.beta);
    let per_frame = g.add(kl, ce);
    let per_frame = g.reshape(per_frame, &[na, 1]);
    let mut avg = vec![0.0; p * na];
    let mut off = 0;
    for (i, &len) in enc.lens[..p].iter().enumerate() {
        for j in 0..len {
            avg[i * na + off + j] = 1.0 / len as f64;
        }
        off += len;
    }
    let avg = constant(g, vec![p, na], avg);
    let vae = g.matmul(avg, per_frame);
    let vae = g.reshape(vae, &[p]);

    // Sequence autoencoder from each anchor's final h.
    let v = g.slice(enc.final_h, 0, 0, p);
    let steps = *enc.lens[..p].iter().max().expect("nonempty");
    let outs = net.seq_decoder.apply(g, v, p, steps);
    let embed = net.arch.embed;
    let mut acc = None;
    for (t, &out) in outs.iter().enumerate() {
        let e = g.slice(enc.step_e[t], 0, 0, p);
        let tgt = g.stop_grad(e);
        let diff = g.sub(out, tgt);
        let sq = g.square(diff);
        let mut mask = vec![0.0; p * embed];
        for (i, &len) in enc.lens[..p].iter().enumerate() {
            if t < len {
                mask[i * embed..(i + 1) * embed].fill(1.0 / (len * embed) as f64);
            }
        }
        let mask = constant(g, vec![p, embed], mask);
        let term = g.mul(sq, mask);
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term),
        });
    }
    let seq_ae = g.sum_last(acc.expect("at least one step"));

    let a = g.scale(triplet, w.w_triplet);
    let b = g.scale(vae, w.w_vae);
    let c = g.scale(seq_ae, w.w_seq_ae);
    let ab = g.add(a, b);
    let per_pair = g.add(ab, c);
    let total = g.mean(per_pair);
    Ok(LossNodes {
        triplet,
        vae,
        seq_ae,
        per_pair,
        total,
    })
}

fn mean(a: &Array) -> f64 {
    a.data().iter().map(|&v| v as f64).sum::<f64>() / a.len() as f64
}

/// First pair whose loss is non-finite when evaluated alone.
fn locate_non_finite(
    net: &MetricNet,
    store: &ParameterStore,
    batch: &[LabeledPair],
    w: &MetricLossWeights,
) -> Option<usize> {
    (0..batch.len()).find(|&i| {
        let one = &batch[i..i + 1];
        let mut g = Graph::new();
        match build_loss(net, &mut g, one, w, StepNoise::none(net, one)) {
            Ok(n) => g
                .run(store, &Inputs::new(), n.total)
                .map(|v| !v.is_finite())
                .unwrap_or(true),
            Err(_) => true,
        }
    })
}

/// One optimizer step on the composed loss. Reports the pre-step means of
/// each component. A non-finite loss leaves the parameters untouched.
pub fn metric_train_step<R: Rng + ?Sized>(
    net: &MetricNet,
    store: &mut ParameterStore,
    adam: &mut Adam,
    batch: &[LabeledPair],
    w: &MetricLossWeights,
    rng: &mut R,
    dropout: bool,
) -> Result<LossReport> {
    let noise = StepNoise::sample(net, batch, rng, dropout);
    let mut g = Graph::new();
    let nodes = build_loss(net, &mut g, batch, w, noise)?;
    match g.forward(store, &Inputs::new()) {
        Ok(()) => {}
        Err(Error::NonFinite { .. }) => {
            let index = locate_non_finite(net, store, batch, w).unwrap_or(0);
            return Err(Error::NonFiniteLoss { index });
        }
        Err(e) => return Err(e),
    }
    let report = LossReport {
        triplet: mean(g.value(nodes.triplet)),
        vae: mean(g.value(nodes.vae)),
        seq_ae: mean(g.value(nodes.seq_ae)),
        total: g.value(nodes.total).item() as f64,
    };
    store.zero_grad_of(adam.ids());
    g.backward(nodes.total, Array::scalar(1.0), store)?;
    for &id in adam.ids() {
        if !store.grad(id).is_finite() {
            return Err(Error::NonFiniteGradient(store.name(id).into()));
        }
    }
    adam.step(store);
    Ok(report)
}

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::init::dropout_mask;
use super::layers::{Conv, Deconv, Dense, Lstm, LstmState};
use crate::autodiff::{Array, Graph, Inputs, NodeId, ParameterStore};
use crate::frame::{Frame, MotionSequence};
use crate::math::Real;
use crate::{Error, Result};

/// Sizes of the metric network. Defaults are for 32×32 frames.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricArch {
    pub frame_h: usize,
    pub frame_w: usize,
    pub conv1_filters: usize,
    pub conv1_kernel: usize,
    pub conv2_filters: usize,
    pub conv2_kernel: usize,
    pub stride: usize,
    pub dense1: usize,
    pub embed: usize,
    pub lstm_hidden: usize,
    pub dropout: f32,
}

impl Default for MetricArch {
    fn default() -> Self {
        Self::with_frame(32, 32)
    }
}

impl MetricArch {
    pub fn with_frame(frame_h: usize, frame_w: usize) -> Self {
        Self {
            frame_h,
            frame_w,
            conv1_filters: 8,
            conv1_kernel: 6,
            conv2_filters: 16,
            conv2_kernel: 4,
            stride: 2,
            dense1: 256,
            embed: 64,
            lstm_hidden: 128,
            dropout: 0.2,
        }
    }

    /// Canonical description, hashed into checkpoints.
    pub fn describe(&self) -> String {
        format!(
            "frame={}x{} conv1={}k{} conv2={}k{} stride={} dense1={} embed={} lstm={}",
            self.frame_h,
            self.frame_w,
            self.conv1_filters,
            self.conv1_kernel,
            self.conv2_filters,
            self.conv2_kernel,
            self.stride,
            self.dense1,
            self.embed,
            self.lstm_hidden
        )
    }
}

/// Two conv layers with dropout between them, then two dense layers. The
/// last one is a sigmoid, so embeddings live in `(0,1)^embed`.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    pub conv1: Conv,
    pub conv2: Conv,
    pub dense1: Dense,
    pub dense2: Dense,
    pub frame: (usize, usize),
    pub mid: (usize, usize),
    pub out: (usize, usize),
}

#[derive(Clone, Copy, Debug)]
pub struct ConvOut {
    /// `[N, dense1]` activation, shared with the VAE head.
    pub hidden: NodeId,
    /// `[N, embed]`
    pub embedding: NodeId,
}

impl ConvEncoder {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        arch: &MetricArch,
        rng: &mut R,
    ) -> Result<Self> {
        let conv1 = Conv::register(
            store,
            &format!("{prefix}.conv1"),
            1,
            arch.conv1_filters,
            arch.conv1_kernel,
            arch.stride,
            rng,
        )?;
        let conv2 = Conv::register(
            store,
            &format!("{prefix}.conv2"),
            arch.conv1_filters,
            arch.conv2_filters,
            arch.conv2_kernel,
            arch.stride,
            rng,
        )?;
        let bad = || {
            Error::InvalidArgument(format!(
                "frame {}x{} does not tile the conv stack",
                arch.frame_h, arch.frame_w
            ))
        };
        let mid = (
            conv1.out_size(arch.frame_h).ok_or_else(bad)?,
            conv1.out_size(arch.frame_w).ok_or_else(bad)?,
        );
        let out = (
            conv2.out_size(mid.0).ok_or_else(bad)?,
            conv2.out_size(mid.1).ok_or_else(bad)?,
        );
        let flat = arch.conv2_filters * out.0 * out.1;
        let dense1 = Dense::register(store, &format!("{prefix}.dense1"), flat, arch.dense1, rng)?;
        let dense2 = Dense::register(
            store,
            &format!("{prefix}.dense2"),
            arch.dense1,
            arch.embed,
            rng,
        )?;
        Ok(Self {
            conv1,
            conv2,
            dense1,
            dense2,
            frame: (arch.frame_h, arch.frame_w),
            mid,
            out,
        })
    }

    /// Shape of the dropout mask for `n` frames.
    pub fn mask_shape(&self, n: usize) -> [usize; 4] {
        [n, self.conv1.filters, self.mid.0, self.mid.1]
    }

    /// `x: [N, 1, H, W]`.
    pub fn apply<T: Real>(&self, g: &mut Graph<T>, x: NodeId, mask: Option<NodeId>) -> ConvOut {
        let c1 = self.conv1.apply(g, x);
        let mut a1 = g.relu(c1);
        if let Some(m) = mask {
            a1 = g.dropout(a1, m);
        }
        let c2 = self.conv2.apply(g, a1);
        let a2 = g.relu(c2);
        let flat = g.reshape(a2, &[0, self.dense1.inputs]);
        let d1 = self.dense1.apply(g, flat);
        let hidden = g.relu(d1);
        let d2 = self.dense2.apply(g, hidden);
        let embedding = g.sigmoid(d2);
        ConvOut { hidden, embedding }
    }
}

/// LSTM over frame embeddings followed by a sigmoid dense head.
#[derive(Clone, Debug)]
pub struct SeqEncoder {
    pub lstm: Lstm,
    pub out: Dense,
}

impl SeqEncoder {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        arch: &MetricArch,
        rng: &mut R,
    ) -> Result<Self> {
        let lstm = Lstm::register(
            store,
            &format!("{prefix}.lstm"),
            arch.embed,
            arch.lstm_hidden,
            rng,
        )?;
        let out = Dense::register(
            store,
            &format!("{prefix}.out"),
            arch.lstm_hidden,
            arch.embed,
            rng,
        )?;
        Ok(Self { lstm, out })
    }

    /// One recurrence step; returns the new state and the `embed`-wide output.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        e: NodeId,
        state: LstmState,
    ) -> (LstmState, NodeId) {
        let state = self.lstm.step(g, e, state);
        let o = self.out.apply(g, state.h);
        (state, g.sigmoid(o))
    }
}

/// Diagonal Gaussian posterior over the latent code.
#[derive(Clone, Debug)]
pub struct VaeHead {
    pub mu: Dense,
    pub log_var: Dense,
}

impl VaeHead {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        arch: &MetricArch,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            mu: Dense::register(store, &format!("{prefix}.mu"), arch.dense1, arch.embed, rng)?,
            log_var: Dense::register(
                store,
                &format!("{prefix}.log_var"),
                arch.dense1,
                arch.embed,
                rng,
            )?,
        })
    }

    /// Returns `(mu, log_var)`.
    pub fn apply<T: Real>(&self, g: &mut Graph<T>, hidden: NodeId) -> (NodeId, NodeId) {
        (self.mu.apply(g, hidden), self.log_var.apply(g, hidden))
    }

    /// `z = mu + exp(log_var / 2) * noise`.
    pub fn sample<T: Real>(
        &self,
        g: &mut Graph<T>,
        mu: NodeId,
        log_var: NodeId,
        noise: NodeId,
    ) -> NodeId {
        let half = g.scale(log_var, 0.5);
        let sigma = g.exp(half);
        let spread = g.mul(sigma, noise);
        g.add(mu, spread)
    }
}

/// `z = mu + sigma * noise` on plain vectors.
pub fn reparameterize(mu: &[f32], sigma: &[f32], noise: &[f32]) -> Vec<f32> {
    mu.iter()
        .zip(sigma)
        .zip(noise)
        .map(|((m, s), n)| m + s * n)
        .collect()
}

/// Mirror of the conv encoder: two dense layers, then transposed convs back
/// to frame size. Outputs Bernoulli logits.
#[derive(Clone, Debug)]
pub struct ImageDecoder {
    pub fc1: Dense,
    pub fc2: Dense,
    pub deconv1: Deconv,
    pub deconv2: Deconv,
    pub grid: (usize, usize),
}

impl ImageDecoder {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        arch: &MetricArch,
        grid: (usize, usize),
        rng: &mut R,
    ) -> Result<Self> {
        let fc1 = Dense::register(
            store,
            &format!("{prefix}.fc1"),
            arch.embed,
            arch.dense1,
            rng,
        )?;
        let fc2 = Dense::register(
            store,
            &format!("{prefix}.fc2"),
            arch.dense1,
            arch.conv2_filters * grid.0 * grid.1,
            rng,
        )?;
        let deconv1 = Deconv::register(
            store,
            &format!("{prefix}.deconv1"),
            arch.conv2_filters,
            arch.conv1_filters,
            arch.conv2_kernel,
            arch.stride,
            rng,
        )?;
        let deconv2 = Deconv::register(
            store,
            &format!("{prefix}.deconv2"),
            arch.conv1_filters,
            1,
            arch.conv1_kernel,
            arch.stride,
            rng,
        )?;
        Ok(Self {
            fc1,
            fc2,
            deconv1,
            deconv2,
            grid,
        })
    }

    /// `z: [N, embed]` to logits `[N, 1, H, W]`.
    pub fn apply<T: Real>(&self, g: &mut Graph<T>, z: NodeId) -> NodeId {
        let f1 = self.fc1.apply(g, z);
        let a1 = g.relu(f1);
        let f2 = self.fc2.apply(g, a1);
        let a2 = g.relu(f2);
        let grid = g.reshape(a2, &[0, self.deconv1.channels, self.grid.0, self.grid.1]);
        let d1 = self.deconv1.apply(g, grid);
        let a3 = g.relu(d1);
        self.deconv2.apply(g, a3)
    }
}

/// Autoregressive LSTM decoder conditioned on a context vector. Each step
/// reads `[previous output, context]`; the first previous output is zero.
#[derive(Clone, Debug)]
pub struct SeqDecoder {
    pub lstm: Lstm,
    pub out: Dense,
}

impl SeqDecoder {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        prefix: &str,
        arch: &MetricArch,
        rng: &mut R,
    ) -> Result<Self> {
        let lstm = Lstm::register(
            store,
            &format!("{prefix}.lstm"),
            2 * arch.embed,
            arch.lstm_hidden,
            rng,
        )?;
        let out = Dense::register(
            store,
            &format!("{prefix}.out"),
            arch.lstm_hidden,
            arch.embed,
            rng,
        )?;
        Ok(Self { lstm, out })
    }

    /// `v: [B, embed]`; returns `steps` nodes of shape `[B, embed]`.
    pub fn apply<T: Real>(
        &self,
        g: &mut Graph<T>,
        v: NodeId,
        batch: usize,
        steps: usize,
    ) -> Vec<NodeId> {
        let mut prev = g.constant(Array::zeros(&[batch, self.out.outputs]));
        let mut state = self.lstm.zero_state(g, batch);
        let mut outs = Vec::with_capacity(steps);
        for _ in 0..steps {
            let x = g.concat(&[prev, v], 1);
            state = self.lstm.step(g, x, state);
            let o = self.out.apply(g, state.h);
            prev = g.sigmoid(o);
            outs.push(prev);
        }
        outs
    }
}

/// Graph nodes for a batch of sequences encoded by the shared branch.
#[derive(Clone, Debug)]
pub struct SeqBatch {
    pub lens: Vec<usize>,
    /// Row of each sequence's first frame in `conv.embedding`.
    pub offsets: Vec<usize>,
    /// The stacked input frames, `[N, 1, H, W]`.
    pub frames: NodeId,
    pub conv: ConvOut,
    /// `steps[t]` is `[B, embed]`; row `b` is meaningful for `t < lens[b]`.
    pub steps: Vec<NodeId>,
    /// `step_e[t]` is the frame embedding fed at step `t`, `[B, embed]`.
    pub step_e: Vec<NodeId>,
    /// `h` at each sequence's last frame, `[B, embed]`.
    pub final_h: NodeId,
    /// Mean frame embedding per sequence, `[B, embed]`.
    pub mean_e: NodeId,
}

impl SeqBatch {
    pub fn batch(&self) -> usize {
        self.lens.len()
    }

    /// `concat(final_h, mean_e)`, the sequence-level encoding.
    pub fn combined<T: Real>(&self, g: &mut Graph<T>) -> NodeId {
        g.concat(&[self.final_h, self.mean_e], 1)
    }
}

/// Per-step encodings of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    /// Frame embeddings `e_t`.
    pub e: Vec<Vec<f32>>,
    /// Temporal encodings `h_t`.
    pub h: Vec<Vec<f32>>,
}

impl Encoded {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    pub fn final_h(&self) -> &[f32] {
        self.h.last().expect("encodings are nonempty")
    }

    pub fn mean_e(&self) -> Vec<f32> {
        let mut m = vec![0.0f32; self.e[0].len()];
        for row in &self.e {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.e.len() as f32;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// The full Siamese metric: one shared frame encoder and sequence encoder,
/// plus the VAE and sequence-autoencoder heads used as regularizers.
#[derive(Clone, Debug)]
pub struct MetricNet {
    pub arch: MetricArch,
    pub conv: ConvEncoder,
    pub seq: SeqEncoder,
    pub vae: VaeHead,
    pub image_decoder: ImageDecoder,
    pub seq_decoder: SeqDecoder,
}

pub const METRIC_PREFIX: &str = "metric";

/// Sequences per graph when encoding without gradients.
const ENCODE_CHUNK: usize = 32;

impl MetricNet {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        arch: &MetricArch,
        rng: &mut R,
    ) -> Result<Self> {
        let p = METRIC_PREFIX;
        let conv = ConvEncoder::register(store, &format!("{p}.conv"), arch, rng)?;
        let seq = SeqEncoder::register(store, &format!("{p}.seq"), arch, rng)?;
        let vae = VaeHead::register(store, &format!("{p}.vae"), arch, rng)?;
        let image_decoder =
            ImageDecoder::register(store, &format!("{p}.image_dec"), arch, conv.out, rng)?;
        let seq_decoder = SeqDecoder::register(store, &format!("{p}.seq_dec"), arch, rng)?;
        Ok(Self {
            arch: arch.clone(),
            conv,
            seq,
            vae,
            image_decoder,
            seq_decoder,
        })
    }

    pub fn check_frame(&self, f: &Frame) -> Result<()> {
        if f.height() != self.arch.frame_h || f.width() != self.arch.frame_w {
            return Err(Error::FrameShape {
                h: self.arch.frame_h,
                w: self.arch.frame_w,
                got_h: f.height(),
                got_w: f.width(),
            });
        }
        Ok(())
    }

    /// Stacks frames into `[N, 1, H, W]`.
    pub fn frames_array<T: Real>(&self, frames: &[&Frame]) -> Result<Array<T>> {
        let mut data = Vec::with_capacity(frames.len() * self.arch.frame_h * self.arch.frame_w);
        for f in frames {
            self.check_frame(f)?;
            data.extend(f.pixels().iter().map(|&p| T::from_f32(p)));
        }
        Array::new(
            vec![frames.len(), 1, self.arch.frame_h, self.arch.frame_w],
            data,
        )
    }

    pub fn dropout_mask<R: Rng + ?Sized>(&self, rng: &mut R, frames: usize) -> Array {
        dropout_mask(rng, &self.conv.mask_shape(frames), self.arch.dropout)
    }

    /// Encodes `seqs` through the shared branch. Frames of all sequences go
    /// through the conv stack as one batch; the LSTM then runs over the
    /// longest length, holding shorter sequences on their last frame
    /// (harmless, since rows past a sequence's end are never read).
    pub fn encode_batch<T: Real>(
        &self,
        g: &mut Graph<T>,
        seqs: &[&MotionSequence],
        mask: Option<Array<T>>,
    ) -> Result<SeqBatch> {
        if seqs.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut frames = Vec::new();
        let mut lens = Vec::with_capacity(seqs.len());
        let mut offsets = Vec::with_capacity(seqs.len());
        for s in seqs {
            if s.is_empty() {
                return Err(Error::EmptySequence);
            }
            offsets.push(frames.len());
            lens.push(s.len());
            frames.extend(s.frames.iter());
        }
        let x = g.constant(self.frames_array(&frames)?);
        let mask = mask.map(|m| g.constant(m));
        let conv = self.conv.apply(g, x, mask);

        let b = seqs.len();
        let t_max = *lens.iter().max().expect("nonempty");
        let mut state = self.seq.lstm.zero_state(g, b);
        let mut steps = Vec::with_capacity(t_max);
        let mut step_e = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let rows: Vec<usize> = (0..b).map(|i| offsets[i] + t.min(lens[i] - 1)).collect();
            let e = g.gather_rows(conv.embedding, rows);
            let (s, h) = self.seq.step(g, e, state);
            state = s;
            steps.push(h);
            step_e.push(e);
        }
        let all_h = if steps.len() == 1 {
            steps[0]
        } else {
            g.concat(&steps, 0)
        };
        let final_rows: Vec<usize> = (0..b).map(|i| (lens[i] - 1) * b + i).collect();
        let final_h = g.gather_rows(all_h, final_rows);

        let n = frames.len();
        let mut avg = Array::<T>::zeros(&[b, n]);
        for i in 0..b {
            let w = T::ONE / T::from_f64(lens[i] as f64);
            for j in 0..lens[i] {
                avg.data_mut()[i * n + offsets[i] + j] = w;
            }
        }
        let avg = g.constant(avg);
        let mean_e = g.matmul(avg, conv.embedding);
        Ok(SeqBatch {
            lens,
            offsets,
            frames: x,
            conv,
            steps,
            step_e,
            final_h,
            mean_e,
        })
    }

    /// Evaluation-mode encoding (no dropout, fresh zero state per sequence).
    pub fn encode(&self, store: &ParameterStore, seqs: &[&MotionSequence]) -> Result<Vec<Encoded>> {
        let mut out = Vec::with_capacity(seqs.len());
        for chunk in seqs.chunks(ENCODE_CHUNK) {
            let mut g = Graph::<f32>::new();
            let batch = self.encode_batch(&mut g, chunk, None)?;
            g.forward(store, &Inputs::new())?;
            let emb = g.value(batch.conv.embedding);
            for (i, &len) in batch.lens.iter().enumerate() {
                let e = (0..len)
                    .map(|t| emb.row(batch.offsets[i] + t).to_vec())
                    .collect();
                let h = (0..len)
                    .map(|t| g.value(batch.steps[t]).row(i).to_vec())
                    .collect();
                out.push(Encoded { e, h });
            }
        }
        Ok(out)
    }

    /// Encodes a single sequence.
    pub fn encode_one(&self, store: &ParameterStore, seq: &MotionSequence) -> Result<Encoded> {
        Ok(self.encode(store, &[seq])?.remove(0))
    }
}

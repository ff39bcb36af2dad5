use alloc::format;

use rand::Rng;

use super::init::glorot_uniform;
use crate::autodiff::{Array, Graph, NodeId, ParamId, ParameterStore};
use crate::math::Real;
use crate::Result;

/// Fully connected layer, `x @ w + b` with `w: [inputs, outputs]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = store.insert(
            &format!("{name}.w"),
            glorot_uniform(rng, &[inputs, outputs], inputs, outputs),
        )?;
        let b = store.insert(&format!("{name}.b"), Array::zeros(&[outputs]))?;
        Ok(Self {
            w,
            b,
            inputs,
            outputs,
        })
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.linear(x, w, b)
    }
}

/// Valid strided convolution with square kernels.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let area = kernel * kernel;
        let w = glorot_uniform(
            rng,
            &[filters, channels, kernel, kernel],
            channels * area,
            filters * area,
        );
        let w = store.insert(&format!("{name}.w"), w)?;
        let b = store.insert(&format!("{name}.b"), Array::zeros(&[filters]))?;
        Ok(Self {
            w,
            b,
            channels,
            filters,
            kernel,
            stride,
        })
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.conv2d(x, w, b, self.stride)
    }

    /// Output side length for an input side length, if the kernel tiles it exactly.
    pub fn out_size(&self, n: usize) -> Option<usize> {
        if n < self.kernel || (n - self.kernel) % self.stride != 0 {
            return None;
        }
        Some((n - self.kernel) / self.stride + 1)
    }
}

/// Transposed convolution, the shape inverse of a [`Conv`] with the same
/// kernel and stride.
#[derive(Clone, Debug)]
pub struct Deconv {
    pub w: ParamId,
    pub b: ParamId,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Deconv {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let area = kernel * kernel;
        let w = glorot_uniform(
            rng,
            &[channels, filters, kernel, kernel],
            channels * area,
            filters * area,
        );
        let w = store.insert(&format!("{name}.w"), w)?;
        let b = store.insert(&format!("{name}.b"), Array::zeros(&[filters]))?;
        Ok(Self {
            w,
            b,
            channels,
            filters,
            kernel,
            stride,
        })
    }

    pub fn apply<T: Real>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.conv_transpose2d(x, w, b, self.stride)
    }
}

/// LSTM cell. Gates are packed `[input, forget, cell, output]` along the
/// columns of `w: [inputs + hidden, 4 * hidden]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl Lstm {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = glorot_uniform(rng, &[inputs + hidden, 4 * hidden], inputs + hidden, hidden);
        let w = store.insert(&format!("{name}.w"), w)?;
        let mut b = Array::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.insert(&format!("{name}.b"), b)?;
        Ok(Self {
            w,
            b,
            inputs,
            hidden,
        })
    }

    /// Zero `(h, c)` for a batch of `batch` sequences.
    pub fn zero_state<T: Real>(&self, g: &mut Graph<T>, batch: usize) -> LstmState {
        let h = g.constant(Array::zeros(&[batch, self.hidden]));
        LstmState { h, c: h }
    }

    pub fn step<T: Real>(&self, g: &mut Graph<T>, x: NodeId, state: LstmState) -> LstmState {
        let n = self.hidden;
        let xh = g.concat(&[x, state.h], 1);
        let w = g.param(self.w);
        let b = g.param(self.b);
        let z = g.linear(xh, w, b);
        let zi = g.slice(z, 1, 0, n);
        let zf = g.slice(z, 1, n, n);
        let zg = g.slice(z, 1, 2 * n, n);
        let zo = g.slice(z, 1, 3 * n, n);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, state.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }
}

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::{Array, ParamId, ParameterStore};
use crate::math::Real;
use crate::{Error, Result};

/// Smoothing inside `||v||_eps = sqrt(sum v^2 + NORM_EPS)`.
pub const NORM_EPS: f32 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named arrays bound to [`Graph::input`] nodes at forward time.
#[derive(Clone, Debug)]
pub struct Inputs<T = f32> {
    map: BTreeMap<String, Array<T>>,
}

impl<T: Real> Default for Inputs<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Inputs<T> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Array<T>) -> &mut Self {
        self.map.insert(name.to_string(), value);
        self
    }

    pub fn with(mut self, name: &str, value: Array<T>) -> Self {
        self.insert(name, value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Array<T>> {
        self.map.get(name)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Const,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Affine(NodeId, f32, f32),
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    Softplus(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    SumLast(NodeId),
    Concat(Vec<NodeId>, usize),
    Slice {
        x: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape(NodeId, Vec<usize>),
    GatherRows(NodeId, Vec<usize>),
    BroadcastRows(NodeId, usize),
    Dropout(NodeId, NodeId),
    L2Norm(NodeId),
    StopGrad(NodeId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
    },
    ConvTranspose2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const => "const",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Affine(..) => "affine",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Softplus(_) => "softplus",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumLast(_) => "sum_last",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(..) => "reshape",
            Op::GatherRows(..) => "gather_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::Dropout(..) => "dropout",
            Op::L2Norm(_) => "l2_norm",
            Op::StopGrad(_) => "stop_grad",
            Op::Conv2d { .. } => "conv2d",
            Op::ConvTranspose2d { .. } => "conv_transpose2d",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Const | Op::Param(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::Dropout(a, b) => vec![*a, *b],
            Op::Affine(x, ..)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Tanh(x)
            | Op::Exp(x)
            | Op::Log(x)
            | Op::Square(x)
            | Op::Softplus(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::SumLast(x)
            | Op::Reshape(x, _)
            | Op::GatherRows(x, _)
            | Op::BroadcastRows(x, _)
            | Op::L2Norm(x)
            | Op::StopGrad(x)
            | Op::Slice { x, .. } => vec![*x],
            Op::Concat(xs, _) => xs.clone(),
            Op::Conv2d { x, w, b, .. } | Op::ConvTranspose2d { x, w, b, .. } => {
                vec![*x, *w, *b]
            }
        }
    }
}

/// A define-then-run computation graph. Nodes are appended in topological
/// order, so node ids double as the evaluation schedule.
#[derive(Clone, Debug)]
pub struct Graph<T = f32> {
    ops: Vec<Op>,
    requires_grad: Vec<bool>,
    values: Vec<Option<Array<T>>>,
    grads: Vec<Option<Array<T>>>,
    param_nodes: BTreeMap<usize, NodeId>,
    forwarded: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, node: usize, detail: String) -> Error {
    Error::ShapeMismatch { op, node, detail }
}

/// Splits a shape around `axis` into (outer, axis, inner) extents.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_last(shape: &[usize]) -> Vec<usize> {
    if shape.len() <= 1 {
        vec![1]
    } else {
        shape[..shape.len() - 1].to_vec()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            requires_grad: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            param_nodes: BTreeMap::new(),
            forwarded: false,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op) -> NodeId {
        let needs =
            op.inputs().iter().any(|id| self.requires_grad[id.0]) || matches!(op, Op::Param(_));
        let needs = needs && !matches!(op, Op::StopGrad(_));
        for id in op.inputs() {
            assert!(id.0 < self.ops.len(), "node {} does not exist", id.0);
        }
        self.ops.push(op);
        self.requires_grad.push(needs);
        self.values.push(None);
        self.grads.push(None);
        self.forwarded = false;
        NodeId(self.ops.len() - 1)
    }

    // ---- leaves ----

    /// Placeholder bound by name at forward time.
    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(Op::Input(name.to_string()))
    }

    /// Fixed array baked into the graph.
    pub fn constant(&mut self, value: Array<T>) -> NodeId {
        let id = self.push(Op::Const);
        self.values[id.0] = Some(value);
        id
    }

    /// Node reading parameter `id`. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id.0) {
            return n;
        }
        let n = self.push(Op::Param(id));
        self.param_nodes.insert(id.0, n);
        n
    }

    // ---- primitives ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }
    /// `x[..., D] + b[D]` broadcast over leading dimensions.
    pub fn add_row(&mut self, x: NodeId, b: NodeId) -> NodeId {
        self.push(Op::AddRow(x, b))
    }
    /// `scale * x + shift`.
    pub fn affine(&mut self, x: NodeId, scale: f32, shift: f32) -> NodeId {
        self.push(Op::Affine(x, scale, shift))
    }
    pub fn scale(&mut self, x: NodeId, s: f32) -> NodeId {
        self.affine(x, s, 0.0)
    }
    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Relu(x))
    }
    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sigmoid(x))
    }
    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Tanh(x))
    }
    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Exp(x))
    }
    pub fn log(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Log(x))
    }
    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Square(x))
    }
    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Softplus(x))
    }
    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x))
    }
    /// Mean of all elements, shape `[1]`.
    pub fn mean(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Mean(x))
    }
    /// Sum over the last axis.
    pub fn sum_last(&mut self, x: NodeId) -> NodeId {
        self.push(Op::SumLast(x))
    }
    pub fn concat(&mut self, xs: &[NodeId], axis: usize) -> NodeId {
        self.push(Op::Concat(xs.to_vec(), axis))
    }
    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> NodeId {
        self.push(Op::Slice {
            x,
            axis,
            start,
            len,
        })
    }
    /// A single `0` extent is inferred from the element count.
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        self.push(Op::Reshape(x, shape.to_vec()))
    }
    /// Selects rows (first-axis entries) by index; repeats are allowed.
    pub fn gather_rows(&mut self, x: NodeId, rows: Vec<usize>) -> NodeId {
        self.push(Op::GatherRows(x, rows))
    }
    /// Tiles a `[D]` vector into `[n, D]`.
    pub fn broadcast_rows(&mut self, x: NodeId, n: usize) -> NodeId {
        self.push(Op::BroadcastRows(x, n))
    }
    /// `x * mask`; the mask (already scaled by `1/keep`) comes from outside.
    pub fn dropout(&mut self, x: NodeId, mask: NodeId) -> NodeId {
        self.push(Op::Dropout(x, mask))
    }
    /// `sqrt(sum v^2 + NORM_EPS)` over the last axis.
    pub fn l2_norm(&mut self, x: NodeId) -> NodeId {
        self.push(Op::L2Norm(x))
    }
    /// Identity forward, blocks gradients.
    pub fn stop_grad(&mut self, x: NodeId) -> NodeId {
        self.push(Op::StopGrad(x))
    }
    /// Valid (unpadded) strided convolution. `x: [N,C,H,W]`,
    /// `w: [F,C,kh,kw]`, `b: [F]`.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> NodeId {
        self.push(Op::Conv2d { x, w, b, stride })
    }
    /// Adjoint of [`Graph::conv2d`] plus bias. `x: [N,Cin,H,W]`,
    /// `w: [Cin,Cout,kh,kw]`, `b: [Cout]`; output is `(H-1)*stride + kh`.
    pub fn conv_transpose2d(&mut self, x: NodeId, w: NodeId, b: NodeId, stride: usize) -> NodeId {
        self.push(Op::ConvTranspose2d { x, w, b, stride })
    }

    // ---- composite helpers ----

    /// `x @ w + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    // ---- evaluation ----

    pub fn is_forwarded(&self) -> bool {
        self.forwarded
    }

    /// Value of a node after [`Graph::forward`].
    ///
    /// Panics if the node has not been evaluated.
    pub fn value(&self, id: NodeId) -> &Array<T> {
        self.values[id.0]
            .as_ref()
            .expect("graph value read before forward")
    }

    pub fn try_value(&self, id: NodeId) -> Option<&Array<T>> {
        self.values[id.0].as_ref()
    }

    /// Gradient of a node from the last backward pass, if it was reached.
    pub fn grad(&self, id: NodeId) -> Option<&Array<T>> {
        self.grads[id.0].as_ref()
    }

    /// Evaluates every node. Constants keep their baked values; inputs are
    /// cloned from `inputs`; parameters are read from `store`.
    pub fn forward(&mut self, store: &ParameterStore<T>, inputs: &Inputs<T>) -> Result<()> {
        self.forwarded = false;
        for i in 0..self.ops.len() {
            if matches!(self.ops[i], Op::Const) {
                continue;
            }
            let (prev, cur) = self.values.split_at_mut(i);
            let value = eval(&self.ops[i], i, prev, store, inputs)?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    op: self.ops[i].name(),
                    node: i,
                });
            }
            cur[0] = Some(value);
        }
        self.forwarded = true;
        Ok(())
    }

    /// Forwards and returns the value of `output`.
    pub fn run(
        &mut self,
        store: &ParameterStore<T>,
        inputs: &Inputs<T>,
        output: NodeId,
    ) -> Result<&Array<T>> {
        self.forward(store, inputs)?;
        Ok(self.value(output))
    }

    /// Propagates `seed` (d loss / d output) back through the graph and adds
    /// the parameter gradients into `store`.
    pub fn backward(
        &mut self,
        output: NodeId,
        seed: Array<T>,
        store: &mut ParameterStore<T>,
    ) -> Result<()> {
        if !self.forwarded {
            return Err(Error::BackwardBeforeForward);
        }
        let out_shape = self.value(output).shape();
        if seed.shape() != out_shape {
            return Err(Error::SeedShape {
                expected: out_shape.to_vec(),
                got: seed.shape().to_vec(),
            });
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        if !self.requires_grad[output.0] {
            return Ok(());
        }
        self.grads[output.0] = Some(seed);
        for i in (0..=output.0).rev() {
            if !self.requires_grad[i] {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let (grads_before, _) = self.grads.split_at_mut(i);
            back(
                &self.ops[i],
                i,
                &g,
                &self.values,
                &self.requires_grad,
                grads_before,
                store,
            )?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}

fn val<T: Real>(values: &[Option<Array<T>>], id: NodeId) -> &Array<T> {
    values[id.0].as_ref().expect("input evaluated before use")
}

fn same_shape<T: Real>(op: &'static str, node: usize, a: &Array<T>, b: &Array<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(mismatch(
            op,
            node,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn map_unary<T: Real>(x: &Array<T>, f: impl Fn(T) -> T) -> Array<T> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Array::new(x.shape().to_vec(), data).expect("same shape")
}

fn zip_binary<T: Real>(a: &Array<T>, b: &Array<T>, f: impl Fn(T, T) -> T) -> Array<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Array::new(a.shape().to_vec(), data).expect("same shape")
}

fn conv_geom<T: Real>(
    op: &'static str,
    node: usize,
    x: &Array<T>,
    kh: usize,
    kw: usize,
    stride: usize,
) -> Result<ConvGeom> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(mismatch(
            op,
            node,
            format!("expected [N,C,H,W], got {:?}", s),
        ));
    }
    if stride == 0 || s[2] < kh || s[3] < kw {
        return Err(mismatch(
            op,
            node,
            format!(
                "kernel {}x{} stride {} does not fit {:?}",
                kh, kw, stride, s
            ),
        ));
    }
    Ok(ConvGeom {
        channels: s[1],
        height: s[2],
        width: s[3],
        kh,
        kw,
        stride,
    })
}

fn eval<T: Real>(
    op: &Op,
    node: usize,
    values: &[Option<Array<T>>],
    store: &ParameterStore<T>,
    inputs: &Inputs<T>,
) -> Result<Array<T>> {
    let name = op.name();
    Ok(match op {
        Op::Const => unreachable!("constants are baked"),
        Op::Input(n) => inputs
            .get(n)
            .cloned()
            .ok_or_else(|| Error::UnboundInput(n.clone()))?,
        Op::Param(id) => store.value(*id).clone(),
        Op::MatMul(a, b) => {
            let (a, b) = (val(values, *a), val(values, *b));
            if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(mismatch(
                    name,
                    node,
                    format!("{:?} x {:?}", a.shape(), b.shape()),
                ));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = Array::<T>::zeros(&[m, n]);
            kernels::gemm_nn(a.data(), b.data(), out.data_mut(), m, k, n);
            out
        }
        Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Dropout(a, b) => {
            let (x, y) = (val(values, *a), val(values, *b));
            same_shape(name, node, x, y)?;
            match op {
                Op::Add(..) => zip_binary(x, y, |p, q| p + q),
                Op::Sub(..) => zip_binary(x, y, |p, q| p - q),
                _ => zip_binary(x, y, |p, q| p * q),
            }
        }
        Op::AddRow(x, b) => {
            let (x, b) = (val(values, *x), val(values, *b));
            let d = *x.shape().last().unwrap();
            if b.ndim() != 1 || b.len() != d {
                return Err(mismatch(
                    name,
                    node,
                    format!("{:?} + row {:?}", x.shape(), b.shape()),
                ));
            }
            let mut out = x.clone();
            for chunk in out.data_mut().chunks_exact_mut(d) {
                for (o, &bv) in chunk.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            out
        }
        Op::Affine(x, s, t) => {
            let (s, t) = (T::from_f32(*s), T::from_f32(*t));
            map_unary(val(values, *x), |v| s * v + t)
        }
        Op::Relu(x) => map_unary(val(values, *x), |v| if v > T::ZERO { v } else { T::ZERO }),
        Op::Sigmoid(x) => map_unary(val(values, *x), T::sigmoid),
        Op::Tanh(x) => map_unary(val(values, *x), T::tanh),
        Op::Exp(x) => map_unary(val(values, *x), T::exp),
        Op::Log(x) => map_unary(val(values, *x), T::ln),
        Op::Square(x) => map_unary(val(values, *x), |v| v * v),
        Op::Softplus(x) => map_unary(val(values, *x), T::softplus),
        Op::Sum(x) | Op::Mean(x) => {
            let x = val(values, *x);
            let s: f64 = x.data().iter().map(|&v| v.to_f64()).sum();
            let s = if matches!(op, Op::Mean(_)) {
                s / x.len() as f64
            } else {
                s
            };
            Array::scalar(T::from_f64(s))
        }
        Op::SumLast(x) | Op::L2Norm(x) => {
            let x = val(values, *x);
            let d = *x.shape().last().unwrap();
            let norm = matches!(op, Op::L2Norm(_));
            let data = x
                .data()
                .chunks_exact(d)
                .map(|c| {
                    if norm {
                        let ss: f64 = c.iter().map(|&v| v.to_f64() * v.to_f64()).sum();
                        T::from_f64(libm::sqrt(ss + NORM_EPS as f64))
                    } else {
                        T::from_f64(c.iter().map(|&v| v.to_f64()).sum::<f64>())
                    }
                })
                .collect();
            Array::new(reduced_last(x.shape()), data)?
        }
        Op::Concat(xs, axis) => {
            let first = val(values, xs[0]);
            let nd = first.ndim();
            if *axis >= nd {
                return Err(mismatch(
                    name,
                    node,
                    format!("axis {} of {:?}", axis, first.shape()),
                ));
            }
            let mut shape = first.shape().to_vec();
            shape[*axis] = 0;
            for &id in xs {
                let x = val(values, id);
                let ok = x.ndim() == nd
                    && x.shape()
                        .iter()
                        .zip(first.shape())
                        .enumerate()
                        .all(|(i, (a, b))| i == *axis || a == b);
                if !ok {
                    return Err(mismatch(
                        name,
                        node,
                        format!("{:?} vs {:?}", first.shape(), x.shape()),
                    ));
                }
                shape[*axis] += x.shape()[*axis];
            }
            let (outer, _, inner) = split_axis(&shape, *axis);
            let mut data = Vec::with_capacity(shape.iter().product());
            for o in 0..outer {
                for &id in xs {
                    let x = val(values, id);
                    let block = x.shape()[*axis] * inner;
                    data.extend_from_slice(&x.data()[o * block..(o + 1) * block]);
                }
            }
            Array::new(shape, data)?
        }
        Op::Slice {
            x,
            axis,
            start,
            len,
        } => {
            let x = val(values, *x);
            if *axis >= x.ndim() || *len == 0 || start + len > x.shape()[*axis] {
                return Err(mismatch(
                    name,
                    node,
                    format!(
                        "[{}..{}] on axis {} of {:?}",
                        start,
                        start + len,
                        axis,
                        x.shape()
                    ),
                ));
            }
            let (outer, ax, inner) = split_axis(x.shape(), *axis);
            let mut data = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = o * ax * inner + start * inner;
                data.extend_from_slice(&x.data()[base..base + len * inner]);
            }
            let mut shape = x.shape().to_vec();
            shape[*axis] = *len;
            Array::new(shape, data)?
        }
        Op::Reshape(x, shape) => {
            let x = val(values, *x);
            let known: usize = shape.iter().filter(|&&d| d != 0).product();
            let shape: Vec<usize> = if shape.iter().filter(|&&d| d == 0).count() == 1
                && known > 0
                && x.len() % known == 0
            {
                shape
                    .iter()
                    .map(|&d| if d == 0 { x.len() / known } else { d })
                    .collect()
            } else {
                shape.clone()
            };
            x.clone()
                .reshaped(&shape)
                .map_err(|_| mismatch(name, node, format!("{:?} -> {:?}", x.shape(), shape)))?
        }
        Op::GatherRows(x, rows) => {
            let x = val(values, *x);
            let r = x.shape()[0];
            let w = x.len() / r;
            if rows.is_empty() || rows.iter().any(|&i| i >= r) {
                return Err(mismatch(name, node, format!("row index out of {} rows", r)));
            }
            let mut data = Vec::with_capacity(rows.len() * w);
            for &i in rows {
                data.extend_from_slice(&x.data()[i * w..(i + 1) * w]);
            }
            let mut shape = x.shape().to_vec();
            shape[0] = rows.len();
            Array::new(shape, data)?
        }
        Op::BroadcastRows(x, n) => {
            let x = val(values, *x);
            if x.ndim() != 1 || *n == 0 {
                return Err(mismatch(name, node, format!("{:?} x {}", x.shape(), n)));
            }
            let mut data = Vec::with_capacity(n * x.len());
            for _ in 0..*n {
                data.extend_from_slice(x.data());
            }
            Array::new(vec![*n, x.len()], data)?
        }
        Op::StopGrad(x) => val(values, *x).clone(),
        Op::Conv2d { x, w, b, stride } => {
            let (x, w, b) = (val(values, *x), val(values, *w), val(values, *b));
            if w.ndim() != 4 || b.ndim() != 1 || b.len() != w.shape()[0] {
                return Err(mismatch(
                    name,
                    node,
                    format!("weight {:?} bias {:?}", w.shape(), b.shape()),
                ));
            }
            let g = conv_geom(name, node, x, w.shape()[2], w.shape()[3], *stride)?;
            if g.channels != w.shape()[1] {
                return Err(mismatch(
                    name,
                    node,
                    format!("input {:?} weight {:?}", x.shape(), w.shape()),
                ));
            }
            let (n, f) = (x.shape()[0], w.shape()[0]);
            let (rows, cols) = (g.col_rows(), g.col_cols());
            let in_sz = g.channels * g.height * g.width;
            let mut out = Array::<T>::zeros(&[n, f, g.out_h(), g.out_w()]);
            let mut col = vec![T::ZERO; rows * cols];
            for s in 0..n {
                kernels::im2col(&x.data()[s * in_sz..(s + 1) * in_sz], g, &mut col);
                let dst = &mut out.data_mut()[s * f * cols..(s + 1) * f * cols];
                for (fi, chunk) in dst.chunks_exact_mut(cols).enumerate() {
                    chunk.fill(b.data()[fi]);
                }
                kernels::gemm_nn(w.data(), &col, dst, f, rows, cols);
            }
            out
        }
        Op::ConvTranspose2d { x, w, b, stride } => {
            let (x, w, b) = (val(values, *x), val(values, *w), val(values, *b));
            let xs = x.shape();
            if xs.len() != 4
                || w.ndim() != 4
                || w.shape()[0] != xs[1]
                || b.ndim() != 1
                || b.len() != w.shape()[1]
                || *stride == 0
            {
                return Err(mismatch(
                    name,
                    node,
                    format!("input {:?} weight {:?} bias {:?}", xs, w.shape(), b.shape()),
                ));
            }
            let (n, cin, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
            let (cout, kh, kw) = (w.shape()[1], w.shape()[2], w.shape()[3]);
            let (oh, ow) = ((h - 1) * stride + kh, (wd - 1) * stride + kw);
            let g = ConvGeom {
                channels: cout,
                height: oh,
                width: ow,
                kh,
                kw,
                stride: *stride,
            };
            let (rows, cols) = (g.col_rows(), h * wd);
            let mut out = Array::<T>::zeros(&[n, cout, oh, ow]);
            let mut col = vec![T::ZERO; rows * cols];
            let out_sz = cout * oh * ow;
            for s in 0..n {
                col.fill(T::ZERO);
                kernels::gemm_tn(
                    w.data(),
                    &x.data()[s * cin * cols..(s + 1) * cin * cols],
                    &mut col,
                    rows,
                    cin,
                    cols,
                );
                let dst = &mut out.data_mut()[s * out_sz..(s + 1) * out_sz];
                for (ci, plane) in dst.chunks_exact_mut(oh * ow).enumerate() {
                    plane.fill(b.data()[ci]);
                }
                kernels::col2im(&col, g, dst);
            }
            out
        }
    })
}

/// Lazily allocated gradient slot of an input node, or `None` when that
/// input does not need a gradient.
fn slot<'a, T: Real>(
    grads: &'a mut [Option<Array<T>>],
    values: &[Option<Array<T>>],
    requires: &[bool],
    id: NodeId,
) -> Option<&'a mut Array<T>> {
    if !requires[id.0] {
        return None;
    }
    let g = &mut grads[id.0];
    if g.is_none() {
        *g = Some(Array::zeros(val(values, id).shape()));
    }
    g.as_mut()
}

fn back<T: Real>(
    op: &Op,
    node: usize,
    g: &Array<T>,
    values: &[Option<Array<T>>],
    requires: &[bool],
    grads: &mut [Option<Array<T>>],
    store: &mut ParameterStore<T>,
) -> Result<()> {
    macro_rules! each {
        ($x:expr, |$i:ident, $gx:ident| $body:expr) => {
            if let Some(dst) = slot(grads, values, requires, $x) {
                for ($i, $gx) in dst.data_mut().iter_mut().enumerate() {
                    $body;
                }
            }
        };
    }
    let gd = g.data();
    match op {
        Op::Input(_) | Op::Const => {}
        Op::Param(id) => store.grad_mut(*id).add_assign(g),
        Op::MatMul(a, b) => {
            let (av, bv) = (val(values, *a), val(values, *b));
            let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
            if let Some(da) = slot(grads, values, requires, *a) {
                kernels::gemm_nt(gd, bv.data(), da.data_mut(), m, n, k);
            }
            if let Some(db) = slot(grads, values, requires, *b) {
                kernels::gemm_tn(av.data(), gd, db.data_mut(), k, m, n);
            }
        }
        Op::Add(a, b) => {
            each!(*a, |i, d| *d += gd[i]);
            each!(*b, |i, d| *d += gd[i]);
        }
        Op::Sub(a, b) => {
            each!(*a, |i, d| *d += gd[i]);
            each!(*b, |i, d| *d -= gd[i]);
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(values, *a).data(), val(values, *b).data());
            each!(*a, |i, d| *d += gd[i] * bv[i]);
            each!(*b, |i, d| *d += gd[i] * av[i]);
        }
        Op::Dropout(x, m) => {
            let mv = val(values, *m).data();
            each!(*x, |i, d| *d += gd[i] * mv[i]);
        }
        Op::AddRow(x, b) => {
            each!(*x, |i, d| *d += gd[i]);
            if let Some(db) = slot(grads, values, requires, *b) {
                let dlen = db.len();
                for chunk in gd.chunks_exact(dlen) {
                    for (d, &v) in db.data_mut().iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
            }
        }
        Op::Affine(x, s, _) => {
            let s = T::from_f32(*s);
            each!(*x, |i, d| *d += s * gd[i])
        }
        Op::Relu(x) => {
            let xv = val(values, *x).data();
            each!(*x, |i, d| if xv[i] > T::ZERO {
                *d += gd[i]
            });
        }
        Op::Sigmoid(x) => {
            let y = val(values, NodeId(node)).data();
            each!(*x, |i, d| *d += gd[i] * y[i] * (T::ONE - y[i]));
        }
        Op::Tanh(x) => {
            let y = val(values, NodeId(node)).data();
            each!(*x, |i, d| *d += gd[i] * (T::ONE - y[i] * y[i]));
        }
        Op::Exp(x) => {
            let y = val(values, NodeId(node)).data();
            each!(*x, |i, d| *d += gd[i] * y[i]);
        }
        Op::Log(x) => {
            let xv = val(values, *x).data();
            each!(*x, |i, d| *d += gd[i] / xv[i]);
        }
        Op::Square(x) => {
            let xv = val(values, *x).data();
            each!(*x, |i, d| *d += (xv[i] + xv[i]) * gd[i]);
        }
        Op::Softplus(x) => {
            let xv = val(values, *x).data();
            each!(*x, |i, d| *d += gd[i] * xv[i].sigmoid());
        }
        Op::Sum(x) => {
            let s = gd[0];
            each!(*x, |_i, d| *d += s);
        }
        Op::Mean(x) => {
            let s = gd[0] / T::from_f64(val(values, *x).len() as f64);
            each!(*x, |_i, d| *d += s);
        }
        Op::SumLast(x) => {
            let dlen = *val(values, *x).shape().last().unwrap();
            each!(*x, |i, d| *d += gd[i / dlen]);
        }
        Op::L2Norm(x) => {
            let xa = val(values, *x);
            let dlen = *xa.shape().last().unwrap();
            let norms: Vec<T> = xa
                .data()
                .chunks_exact(dlen)
                .map(|c| {
                    let ss: f64 = c.iter().map(|&v| v.to_f64() * v.to_f64()).sum();
                    T::from_f64(libm::sqrt(ss + NORM_EPS as f64))
                })
                .collect();
            let xv = xa.data();
            each!(*x, |i, d| *d += gd[i / dlen] * xv[i] / norms[i / dlen]);
        }
        Op::Concat(xs, axis) => {
            let shape = g.shape();
            let (outer, _, inner) = split_axis(shape, *axis);
            let total = shape[*axis] * inner;
            let mut offset = 0;
            for &id in xs {
                let len = val(values, id).shape()[*axis] * inner;
                if let Some(dst) = slot(grads, values, requires, id) {
                    for o in 0..outer {
                        let src = &gd[o * total + offset..o * total + offset + len];
                        for (d, &v) in dst.data_mut()[o * len..(o + 1) * len].iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
                offset += len;
            }
        }
        Op::Slice {
            x,
            axis,
            start,
            len,
        } => {
            let (outer, ax, inner) = split_axis(val(values, *x).shape(), *axis);
            if let Some(dst) = slot(grads, values, requires, *x) {
                let dd = dst.data_mut();
                for o in 0..outer {
                    let base = o * ax * inner + start * inner;
                    let src = &gd[o * len * inner..(o + 1) * len * inner];
                    for (d, &v) in dd[base..base + len * inner].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
        Op::Reshape(x, _) | Op::StopGrad(x) => {
            if !matches!(op, Op::StopGrad(_)) {
                each!(*x, |i, d| *d += gd[i]);
            }
        }
        Op::GatherRows(x, rows) => {
            if let Some(dst) = slot(grads, values, requires, *x) {
                let w = dst.len() / dst.shape()[0];
                let dd = dst.data_mut();
                for (k, &r) in rows.iter().enumerate() {
                    for (d, &v) in dd[r * w..(r + 1) * w]
                        .iter_mut()
                        .zip(&gd[k * w..(k + 1) * w])
                    {
                        *d += v;
                    }
                }
            }
        }
        Op::BroadcastRows(x, _) => {
            if let Some(dst) = slot(grads, values, requires, *x) {
                let dlen = dst.len();
                for chunk in gd.chunks_exact(dlen) {
                    for (d, &v) in dst.data_mut().iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
            }
        }
        Op::Conv2d { x, w, b, stride } => {
            let (xv, wv) = (val(values, *x), val(values, *w));
            let kgeom = ConvGeom {
                channels: xv.shape()[1],
                height: xv.shape()[2],
                width: xv.shape()[3],
                kh: wv.shape()[2],
                kw: wv.shape()[3],
                stride: *stride,
            };
            let (n, f) = (xv.shape()[0], wv.shape()[0]);
            let (rows, cols) = (kgeom.col_rows(), kgeom.col_cols());
            let in_sz = kgeom.channels * kgeom.height * kgeom.width;
            if let Some(db) = slot(grads, values, requires, *b) {
                for s in 0..n {
                    for fi in 0..f {
                        let base = (s * f + fi) * cols;
                        db.data_mut()[fi] +=
                            gd[base..base + cols].iter().fold(T::ZERO, |s, &v| s + v);
                    }
                }
            }
            let mut col = vec![T::ZERO; rows * cols];
            if requires[w.0] {
                let dw = slot(grads, values, requires, *w).unwrap();
                for s in 0..n {
                    kernels::im2col(&xv.data()[s * in_sz..(s + 1) * in_sz], kgeom, &mut col);
                    kernels::gemm_nt(
                        &gd[s * f * cols..(s + 1) * f * cols],
                        &col,
                        dw.data_mut(),
                        f,
                        cols,
                        rows,
                    );
                }
            }
            if let Some(dx) = slot(grads, values, requires, *x) {
                for s in 0..n {
                    col.fill(T::ZERO);
                    kernels::gemm_tn(
                        wv.data(),
                        &gd[s * f * cols..(s + 1) * f * cols],
                        &mut col,
                        rows,
                        f,
                        cols,
                    );
                    kernels::col2im(&col, kgeom, &mut dx.data_mut()[s * in_sz..(s + 1) * in_sz]);
                }
            }
        }
        Op::ConvTranspose2d { x, w, b, stride } => {
            let (xv, wv) = (val(values, *x), val(values, *w));
            let (n, cin, h, wd) = (xv.shape()[0], xv.shape()[1], xv.shape()[2], xv.shape()[3]);
            let os = g.shape();
            let (cout, oh, ow) = (os[1], os[2], os[3]);
            let ogeom = ConvGeom {
                channels: cout,
                height: oh,
                width: ow,
                kh: wv.shape()[2],
                kw: wv.shape()[3],
                stride: *stride,
            };
            let (rows, cols) = (ogeom.col_rows(), h * wd);
            let out_sz = cout * oh * ow;
            if let Some(db) = slot(grads, values, requires, *b) {
                for s in 0..n {
                    for ci in 0..cout {
                        let base = s * out_sz + ci * oh * ow;
                        db.data_mut()[ci] +=
                            gd[base..base + oh * ow].iter().fold(T::ZERO, |s, &v| s + v);
                    }
                }
            }
            let need_w = requires[w.0];
            let need_x = requires[x.0];
            if need_w || need_x {
                let mut col = vec![T::ZERO; rows * cols];
                for s in 0..n {
                    kernels::im2col(&gd[s * out_sz..(s + 1) * out_sz], ogeom, &mut col);
                    if let Some(dw) = slot(grads, values, requires, *w) {
                        kernels::gemm_nt(
                            &xv.data()[s * cin * cols..(s + 1) * cin * cols],
                            &col,
                            dw.data_mut(),
                            cin,
                            cols,
                            rows,
                        );
                    }
                    if let Some(dx) = slot(grads, values, requires, *x) {
                        kernels::gemm_nn(
                            wv.data(),
                            &col,
                            &mut dx.data_mut()[s * cin * cols..(s + 1) * cin * cols],
                            cin,
                            rows,
                            cols,
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

//! Reverse-mode automatic differentiation over complex tensors.
//!
//! Complex values are treated as pairs of independent real parameters. For a
//! real loss `L` the gradient stored for a complex entry `z = x + iy` is
//! `∂L/∂x + i ∂L/∂y`, which is exactly what a finite-difference check on the
//! real and imaginary parts measures. Real-flagged tensors receive only the
//! real part of their incoming gradient.
//!
//! A [`Graph`] records nodes in creation order, so the node list is already a
//! topological order and the backward pass is a single reverse sweep.

mod kernels;
mod params;
mod tensor;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use params::{ParamId, Params};
pub use tensor::CTensor;

use crate::linalg::{C64, ZERO};
use crate::math;
use crate::{Error, Result};

use kernels::{batched_inverse, bmm, map, sum_batch, swap_last2, zip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train mode enables batch statistics in batch normalization and random
/// masks in dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Variable,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Adjoint(NodeId),
    Transpose(NodeId),
    Conj(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    AddBcast(NodeId, NodeId),
    MulBcast(NodeId, NodeId),
    Inverse {
        input: NodeId,
        cond: f64,
    },
    Abs2(NodeId),
    SumLast(NodeId),
    SumAll(NodeId),
    Sqrt(NodeId),
    Log(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    BatchNorm(BatchNormRecord),
    Dropout {
        input: NodeId,
        mask: Vec<f64>,
    },
    Concat(Vec<NodeId>),
    Slice {
        input: NodeId,
        start: usize,
    },
    Reshape(NodeId),
    Complex(NodeId, NodeId),
    RealPart(NodeId),
    ImagPart(NodeId),
    Diag(NodeId),
    Expand {
        input: NodeId,
        axis: usize,
    },
    Norm(NodeId),
    Conv1d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
    },
}

#[derive(Debug, Clone)]
struct BatchNormRecord {
    input: NodeId,
    gamma: NodeId,
    beta: NodeId,
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    train: bool,
}

#[derive(Debug, Clone)]
struct Node {
    value: CTensor,
    op: Op,
    tracked: bool,
}

/// Computation graph holding forward values for one evaluation.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
    rng: ChaCha8Rng,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<CTensor>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&CTensor> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    /// Adds parameter gradients into `params`.
    pub fn accumulate_into(&self, graph: &Graph, params: &mut Params) {
        for (i, node) in graph.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &self.grads[i]) {
                params.accumulate_grad(*id, g);
            }
        }
    }
}

impl Graph {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &CTensor {
        &self.nodes[id.0].value
    }

    /// Largest condition estimate recorded by an inverse node.
    pub fn condition_estimate(&self, id: NodeId) -> Option<f64> {
        match self.nodes[id.0].op {
            Op::Inverse { cond, .. } => Some(cond),
            _ => None,
        }
    }

    /// Batch mean and (biased) variance seen by a train-mode batch-norm node.
    pub fn batch_norm_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id.0].op {
            Op::BatchNorm(r) if r.train => Some((&r.batch_mean, &r.batch_var)),
            _ => None,
        }
    }

    fn push(&mut self, value: CTensor, op: Op, parents: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn v(&self, id: NodeId) -> &CTensor {
        &self.nodes[id.0].value
    }

    fn require_real(&self, id: NodeId, what: &str) -> Result<()> {
        if self.v(id).is_real() {
            Ok(())
        } else {
            Err(Error::shape(alloc::format!("{what} needs a real tensor")))
        }
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.v(a).shape() == self.v(b).shape() {
            Ok(())
        } else {
            Err(Error::shape(alloc::format!(
                "{what}: {:?} vs {:?}",
                self.v(a).shape(),
                self.v(b).shape()
            )))
        }
    }

    // ----- leaves -----

    /// Constant input; no gradient flows to it.
    pub fn input(&mut self, value: CTensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Input,
            tracked: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable leaf whose gradient can be read from [`Gradients`].
    pub fn variable(&mut self, value: CTensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Variable,
            tracked: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf bound to a parameter; trainable parameters are tracked.
    pub fn param(&mut self, params: &Params, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: params.value(id).clone(),
            op: Op::Param(id),
            tracked: params.is_trainable(id),
        });
        NodeId(self.nodes.len() - 1)
    }

    // ----- linear algebra -----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = bmm(self.v(a), self.v(b))?;
        self.push(v, Op::MatMul(a, b), &[a, b])
    }

    /// Conjugate transpose of the last two dimensions.
    pub fn adjoint(&mut self, a: NodeId) -> Result<NodeId> {
        let v = swap_last2(self.v(a), true);
        self.push(v, Op::Adjoint(a), &[a])
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = swap_last2(self.v(a), false);
        self.push(v, Op::Transpose(a), &[a])
    }

    pub fn conj(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.v(a);
        let v = map(t, t.is_real(), |z| z.conj());
        self.push(v, Op::Conj(a), &[a])
    }

    /// Batched inverse by partial-pivot LU; the condition estimate is kept
    /// on the node.
    pub fn inverse(&mut self, a: NodeId) -> Result<NodeId> {
        let (v, cond) = batched_inverse(self.v(a))?;
        self.push(v, Op::Inverse { input: a, cond }, &[a])
    }

    // ----- elementwise -----

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let real = self.v(a).is_real() && self.v(b).is_real();
        let v = zip(self.v(a), self.v(b), real, |x, y| x + y);
        self.push(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let real = self.v(a).is_real() && self.v(b).is_real();
        let v = zip(self.v(a), self.v(b), real, |x, y| x - y);
        self.push(v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let real = self.v(a).is_real() && self.v(b).is_real();
        let v = zip(self.v(a), self.v(b), real, |x, y| x * y);
        self.push(v, Op::Mul(a, b), &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "div")?;
        let real = self.v(a).is_real() && self.v(b).is_real();
        let v = zip(self.v(a), self.v(b), real, |x, y| x / y);
        self.push(v, Op::Div(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let t = self.v(a);
        let v = map(t, t.is_real(), |z| z * s);
        self.push(v, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let t = self.v(a);
        let v = map(t, t.is_real(), |z| z + s);
        self.push(v, Op::AddScalar(a), &[a])
    }

    /// `a + b` where `b`'s shape is a suffix of `a`'s shape.
    pub fn add_bcast(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.v(a), self.v(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape(alloc::format!("add_bcast {sa:?} + {sb:?}")));
        }
        let inner = tb.len();
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_mut(inner.max(1)) {
            for (x, y) in chunk.iter_mut().zip(tb.data()) {
                *x += y;
            }
        }
        let v = CTensor::raw(sa.to_vec(), data, ta.is_real() && tb.is_real());
        self.push(v, Op::AddBcast(a, b), &[a, b])
    }

    /// `a * s` where `s`'s shape is a prefix of `a`'s shape; each block of
    /// `a` under index `i` of `s` is scaled by `s[i]`.
    pub fn mul_bcast(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        let (ta, ts) = (self.v(a), self.v(s));
        let (sa, ss) = (ta.shape(), ts.shape());
        if ss.len() > sa.len() || sa[..ss.len()] != *ss {
            return Err(Error::shape(alloc::format!("mul_bcast {sa:?} * {ss:?}")));
        }
        let inner = ta.len() / ts.len().max(1);
        let mut data = ta.data().to_vec();
        for (chunk, f) in data.chunks_mut(inner.max(1)).zip(ts.data()) {
            for x in chunk.iter_mut() {
                *x *= f;
            }
        }
        let v = CTensor::raw(sa.to_vec(), data, ta.is_real() && ts.is_real());
        self.push(v, Op::MulBcast(a, s), &[a, s])
    }

    /// Elementwise squared magnitude (real output).
    pub fn abs2(&mut self, a: NodeId) -> Result<NodeId> {
        let v = map(self.v(a), true, |z| C64::new(z.norm_sqr(), 0.0));
        self.push(v, Op::Abs2(a), &[a])
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.require_real(a, "sqrt")?;
        let v = map(self.v(a), true, |z| C64::new(math::sqrt(z.re), 0.0));
        self.push(v, Op::Sqrt(a), &[a])
    }

    /// Natural log of a real tensor.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.require_real(a, "log")?;
        let v = map(self.v(a), true, |z| C64::new(math::log(z.re), 0.0));
        self.push(v, Op::Log(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.require_real(a, "tanh")?;
        let v = map(self.v(a), true, |z| C64::new(math::tanh(z.re), 0.0));
        self.push(v, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.require_real(a, "relu")?;
        let v = map(self.v(a), true, |z| C64::new(z.re.max(0.0), 0.0));
        self.push(v, Op::Relu(a), &[a])
    }

    // ----- reductions and reshaping -----

    pub fn sum_last(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.v(a);
        let n = t.last_dim();
        let data: Vec<C64> = t.data().chunks(n.max(1)).map(|c| c.iter().sum()).collect();
        let mut shape = t.shape().to_vec();
        shape.pop();
        let v = CTensor::raw(shape, data, t.is_real());
        self.push(v, Op::SumLast(a), &[a])
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.v(a);
        let s: C64 = t.data().iter().sum();
        let v = CTensor::raw(Vec::new(), vec![s], t.is_real());
        self.push(v, Op::SumAll(a), &[a])
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.v(a).len().max(1);
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Frobenius norm of the whole tensor (real scalar).
    pub fn norm(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.v(a).data().iter().map(|z| z.norm_sqr()).sum();
        let v = CTensor::scalar(math::sqrt(s));
        self.push(v, Op::Norm(a), &[a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.v(a).clone().reshaped(shape)?;
        self.push(v, Op::Reshape(a), &[a])
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = self.v(*parts.first().ok_or_else(|| Error::shape("empty concat"))?);
        let lead: Vec<usize> = first.shape()[..first.ndim() - 1].to_vec();
        let rows: usize = lead.iter().product();
        let mut total = 0;
        let mut real = true;
        for p in parts {
            let t = self.v(*p);
            if t.shape()[..t.ndim() - 1] != *lead {
                return Err(Error::shape("concat leading dims differ"));
            }
            total += t.last_dim();
            real &= t.is_real();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                let t = self.v(*p);
                let w = t.last_dim();
                data.extend_from_slice(&t.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let v = CTensor::raw(shape, data, real);
        self.push(v, Op::Concat(parts.to_vec()), parts)
    }

    /// Slice `start..start + len` along the last axis.
    pub fn slice_last(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = self.v(a);
        let w = t.last_dim();
        if start + len > w {
            return Err(Error::shape(alloc::format!(
                "slice {start}..{} of width {w}",
                start + len
            )));
        }
        let data: Vec<C64> = t
            .data()
            .chunks(w)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let v = CTensor::raw(shape, data, t.is_real());
        self.push(v, Op::Slice { input: a, start }, &[a])
    }

    /// `re + i im` from two real tensors of equal shape.
    pub fn complex(&mut self, re: NodeId, im: NodeId) -> Result<NodeId> {
        self.same_shape(re, im, "complex")?;
        self.require_real(re, "complex")?;
        self.require_real(im, "complex")?;
        let v = zip(self.v(re), self.v(im), false, |x, y| C64::new(x.re, y.re));
        self.push(v, Op::Complex(re, im), &[re, im])
    }

    pub fn real_part(&mut self, a: NodeId) -> Result<NodeId> {
        let v = map(self.v(a), true, |z| C64::new(z.re, 0.0));
        self.push(v, Op::RealPart(a), &[a])
    }

    pub fn imag_part(&mut self, a: NodeId) -> Result<NodeId> {
        let v = map(self.v(a), true, |z| C64::new(z.im, 0.0));
        self.push(v, Op::ImagPart(a), &[a])
    }

    /// Diagonal of the last two (square) dimensions.
    pub fn diag(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.v(a);
        let (r, c) = t.last2();
        if r != c || t.ndim() < 2 {
            return Err(Error::shape("diag of non-square"));
        }
        let data: Vec<C64> = t
            .data()
            .chunks(r * r)
            .flat_map(|m| (0..r).map(move |i| m[i * r + i]))
            .collect();
        let mut shape = t.shape().to_vec();
        shape.pop();
        let v = CTensor::raw(shape, data, t.is_real());
        self.push(v, Op::Diag(a), &[a])
    }

    /// Inserts a new axis of size `n` at `axis`, repeating the data.
    pub fn expand(&mut self, a: NodeId, axis: usize, n: usize) -> Result<NodeId> {
        let t = self.v(a);
        if axis > t.ndim() {
            return Err(Error::shape("expand axis out of range"));
        }
        let outer: usize = t.shape()[..axis].iter().product();
        let inner: usize = t.shape()[axis..].iter().product();
        let mut data = Vec::with_capacity(t.len() * n);
        for o in 0..outer {
            let block = &t.data()[o * inner..(o + 1) * inner];
            for _ in 0..n {
                data.extend_from_slice(block);
            }
        }
        let mut shape = t.shape().to_vec();
        shape.insert(axis, n);
        let v = CTensor::raw(shape, data, t.is_real());
        self.push(v, Op::Expand { input: a, axis }, &[a])
    }

    // ----- network layers -----

    /// Softmax over the last axis of a real tensor.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.require_real(a, "softmax")?;
        let t = self.v(a);
        let w = t.last_dim();
        let mut data = Vec::with_capacity(t.len());
        for row in t.data().chunks(w) {
            let mx = row.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|z| math::exp(z.re - mx)).collect();
            let s: f64 = e.iter().sum();
            data.extend(e.into_iter().map(|x| C64::new(x / s, 0.0)));
        }
        let v = CTensor::raw(t.shape().to_vec(), data, true);
        self.push(v, Op::Softmax(a), &[a])
    }

    /// Batch normalization over all leading axes, one statistic per entry of
    /// the last axis. Eval mode uses the supplied running statistics.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
    ) -> Result<NodeId> {
        self.require_real(x, "batch_norm")?;
        let t = self.v(x);
        let f = t.last_dim();
        if self.v(gamma).len() != f || self.v(beta).len() != f {
            return Err(Error::shape("batch_norm parameter width"));
        }
        let rows = t.len() / f;
        let xs = t.re();
        let train = self.mode == Mode::Train;
        let (mean, var) = if train {
            let mut mean = vec![0.0; f];
            let mut var = vec![0.0; f];
            for row in xs.chunks(f) {
                for (m, x) in mean.iter_mut().zip(row) {
                    *m += x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            for row in xs.chunks(f) {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            var.iter_mut().for_each(|v| *v /= rows as f64);
            (mean, var)
        } else {
            (running_mean.to_vec(), running_var.to_vec())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BATCH_NORM_EPS)).collect();
        let g = self.v(gamma).re();
        let b = self.v(beta).re();
        let mut xhat = Vec::with_capacity(xs.len());
        let mut out = Vec::with_capacity(xs.len());
        for row in xs.chunks(f) {
            for j in 0..f {
                let h = (row[j] - mean[j]) * inv_std[j];
                xhat.push(h);
                out.push(C64::new(g[j] * h + b[j], 0.0));
            }
        }
        let v = CTensor::raw(t.shape().to_vec(), out, true);
        let rec = BatchNormRecord {
            input: x,
            gamma,
            beta,
            xhat,
            inv_std,
            batch_mean: if train { mean } else { Vec::new() },
            batch_var: if train { var } else { Vec::new() },
            train,
        };
        self.push(v, Op::BatchNorm(rec), &[x, gamma, beta])
    }

    /// Inverted dropout: in train mode each entry survives with probability
    /// `1 - rate` and is scaled by `1 / (1 - rate)`. Identity in eval mode.
    pub fn dropout(&mut self, a: NodeId, rate: f64) -> Result<NodeId> {
        self.require_real(a, "dropout")?;
        if self.mode == Mode::Eval || rate <= 0.0 {
            return Ok(a);
        }
        if rate >= 1.0 {
            return Err(Error::config("dropout rate must be below 1"));
        }
        let keep = 1.0 - rate;
        let n = self.v(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data = self
            .v(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(z, m)| C64::new(z.re * m, 0.0))
            .collect();
        let v = CTensor::raw(self.v(a).shape().to_vec(), data, true);
        self.push(v, Op::Dropout { input: a, mask }, &[a])
    }

    /// 1-d convolution with "same" padding.
    /// `x`: `[batch, len, c_in]`, `kernel`: `[width, c_in, c_out]`,
    /// `bias`: `[c_out]`; output `[batch, len, c_out]`.
    pub fn conv1d(&mut self, x: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        self.require_real(x, "conv1d")?;
        let (tx, tk, tb) = (self.v(x), self.v(kernel), self.v(bias));
        if tx.ndim() != 3 || tk.ndim() != 3 || tk.shape()[1] != tx.shape()[2] {
            return Err(Error::shape(alloc::format!(
                "conv1d input {:?} kernel {:?}",
                tx.shape(),
                tk.shape()
            )));
        }
        let (bsz, len, cin) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
        let (width, cout) = (tk.shape()[0], tk.shape()[2]);
        if tb.len() != cout {
            return Err(Error::shape("conv1d bias width"));
        }
        let pad = (width - 1) / 2;
        let xs = tx.re();
        let ks = tk.re();
        let bs = tb.re();
        let mut out = vec![0.0; bsz * len * cout];
        for b in 0..bsz {
            for l in 0..len {
                let o = &mut out[(b * len + l) * cout..(b * len + l + 1) * cout];
                o.copy_from_slice(&bs);
                for t in 0..width {
                    let src = l + t;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let xrow = &xs[(b * len + src - pad) * cin..(b * len + src - pad + 1) * cin];
                    for (c, xv) in xrow.iter().enumerate() {
                        let krow = &ks[(t * cin + c) * cout..(t * cin + c + 1) * cout];
                        for (ov, kv) in o.iter_mut().zip(krow) {
                            *ov += xv * kv;
                        }
                    }
                }
            }
        }
        let v = CTensor::from_real(&[bsz, len, cout], out)?;
        self.push(v, Op::Conv1d { input: x, kernel, bias }, &[x, kernel, bias])
    }

    // ----- backward -----

    /// Reverse sweep from a real scalar loss.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.v(loss);
        if lv.len() != 1 || lv.data()[0].im != 0.0 {
            return Err(Error::NotScalar);
        }
        let mut grads: Vec<Option<CTensor>> = vec![None; self.nodes.len()];
        let mut seed = CTensor::zeros_like(lv);
        seed.data_mut()[0] = C64::new(1.0, 0.0);
        grads[loss.0] = Some(seed);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.tracked {
                for (parent, contrib) in self.vjp(node, &g)? {
                    let pnode = &self.nodes[parent.0];
                    if !pnode.tracked {
                        continue;
                    }
                    let mut contrib = contrib;
                    if pnode.value.is_real() {
                        contrib.project_real();
                    }
                    match &mut grads[parent.0] {
                        Some(acc) => acc.add_assign(&contrib),
                        slot => *slot = Some(contrib),
                    }
                }
            }
            grads[i] = Some(g);
        }
        // Untracked nodes never receive gradients; tracked nodes off the loss
        // path get explicit zeros.
        for (i, node) in self.nodes.iter().enumerate() {
            if node.tracked && grads[i].is_none() {
                grads[i] = Some(CTensor::zeros_like(&node.value));
            }
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, node: &Node, g: &CTensor) -> Result<Vec<(NodeId, CTensor)>> {
        let out = &node.value;
        let mut res = Vec::with_capacity(2);
        match &node.op {
            Op::Input | Op::Variable | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.v(*a), self.v(*b));
                let mut ga = bmm(g, &swap_last2(tb, true))?;
                let mut gb = bmm(&swap_last2(ta, true), g)?;
                if ta.ndim() == 2 && ga.ndim() > 2 {
                    ga = sum_batch(&ga);
                }
                if tb.ndim() == 2 && gb.ndim() > 2 {
                    gb = sum_batch(&gb);
                }
                res.push((*a, ga));
                res.push((*b, gb));
            }
            Op::Adjoint(a) => res.push((*a, swap_last2(g, true))),
            Op::Transpose(a) => res.push((*a, swap_last2(g, false))),
            Op::Conj(a) => res.push((*a, map(g, g.is_real(), |z| z.conj()))),
            Op::Add(a, b) => {
                res.push((*a, g.clone()));
                res.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                res.push((*a, g.clone()));
                res.push((*b, map(g, g.is_real(), |z| -z)));
            }
            Op::Mul(a, b) => {
                res.push((*a, zip(g, self.v(*b), false, |gz, bz| gz * bz.conj())));
                res.push((*b, zip(g, self.v(*a), false, |gz, az| gz * az.conj())));
            }
            Op::Div(a, b) => {
                let tb = self.v(*b);
                res.push((*a, zip(g, tb, false, |gz, bz| gz * (C64::new(1.0, 0.0) / bz).conj())));
                let q = zip(out, tb, false, |o, bz| o / bz);
                res.push((*b, zip(g, &q, false, |gz, qz| -gz * qz.conj())));
            }
            Op::Scale(a, s) => res.push((*a, map(g, g.is_real(), |z| z * *s))),
            Op::AddScalar(a) => res.push((*a, g.clone())),
            Op::AddBcast(a, b) => {
                let tb = self.v(*b);
                let inner = tb.len().max(1);
                let mut gb = vec![ZERO; tb.len()];
                for chunk in g.data().chunks(inner) {
                    for (acc, x) in gb.iter_mut().zip(chunk) {
                        *acc += x;
                    }
                }
                res.push((*a, g.clone()));
                res.push((*b, CTensor::raw(tb.shape().to_vec(), gb, false)));
            }
            Op::MulBcast(a, s) => {
                let (ta, ts) = (self.v(*a), self.v(*s));
                let inner = (ta.len() / ts.len().max(1)).max(1);
                let mut ga = g.data().to_vec();
                let mut gs = vec![ZERO; ts.len()];
                for (((gchunk, achunk), f), acc) in ga
                    .chunks_mut(inner)
                    .zip(ta.data().chunks(inner))
                    .zip(ts.data())
                    .zip(gs.iter_mut())
                {
                    for (gz, az) in gchunk.iter_mut().zip(achunk) {
                        *acc += az.conj() * *gz;
                        *gz *= f.conj();
                    }
                }
                res.push((*a, CTensor::raw(ta.shape().to_vec(), ga, false)));
                res.push((*s, CTensor::raw(ts.shape().to_vec(), gs, false)));
            }
            Op::Inverse { input, .. } => {
                let yh = swap_last2(out, true);
                let ga = bmm(&bmm(&yh, g)?, &yh)?;
                res.push((*input, map(&ga, false, |z| -z)));
            }
            Op::Abs2(a) => {
                res.push((*a, zip(g, self.v(*a), false, |gz, az| az * (2.0 * gz.re))));
            }
            Op::SumLast(a) => {
                let ta = self.v(*a);
                let w = ta.last_dim();
                let data = g.data().iter().flat_map(|z| core::iter::repeat_n(*z, w)).collect();
                res.push((*a, CTensor::raw(ta.shape().to_vec(), data, g.is_real())));
            }
            Op::SumAll(a) => {
                let ta = self.v(*a);
                res.push((
                    *a,
                    CTensor::raw(ta.shape().to_vec(), vec![g.data()[0]; ta.len()], g.is_real()),
                ));
            }
            Op::Norm(a) => {
                let n = out.item();
                let ta = self.v(*a);
                let f = if n > 0.0 { g.data()[0].re / n } else { 0.0 };
                res.push((*a, map(ta, false, |z| z * f)));
            }
            Op::Sqrt(a) => {
                res.push((*a, zip(g, out, true, |gz, o| C64::new(gz.re / (2.0 * o.re), 0.0))));
            }
            Op::Log(a) => {
                res.push((*a, zip(g, self.v(*a), true, |gz, x| C64::new(gz.re / x.re, 0.0))));
            }
            Op::Tanh(a) => {
                res.push((
                    *a,
                    zip(g, out, true, |gz, o| C64::new(gz.re * (1.0 - o.re * o.re), 0.0)),
                ));
            }
            Op::Relu(a) => {
                res.push((
                    *a,
                    zip(g, self.v(*a), true, |gz, x| {
                        C64::new(if x.re > 0.0 { gz.re } else { 0.0 }, 0.0)
                    }),
                ));
            }
            Op::Softmax(a) => {
                let w = out.last_dim();
                let mut data = Vec::with_capacity(out.len());
                for (grow, orow) in g.data().chunks(w).zip(out.data().chunks(w)) {
                    let dot: f64 = grow.iter().zip(orow).map(|(x, y)| x.re * y.re).sum();
                    data.extend(grow.iter().zip(orow).map(|(x, y)| C64::new(y.re * (x.re - dot), 0.0)));
                }
                res.push((*a, CTensor::raw(out.shape().to_vec(), data, true)));
            }
            Op::BatchNorm(r) => {
                let f = r.inv_std.len();
                let rows = r.xhat.len() / f;
                let gamma = self.v(r.gamma).re();
                let gs: Vec<f64> = g.re();
                let mut ggamma = vec![0.0; f];
                let mut gbeta = vec![0.0; f];
                for (grow, hrow) in gs.chunks(f).zip(r.xhat.chunks(f)) {
                    for j in 0..f {
                        ggamma[j] += grow[j] * hrow[j];
                        gbeta[j] += grow[j];
                    }
                }
                let mut gx = vec![0.0; gs.len()];
                if r.train {
                    // dxhat sums: Σ dxhat = γ Σ g, Σ dxhat·xhat = γ Σ g·xhat
                    let n = rows as f64;
                    for (i, (grow, hrow)) in gs.chunks(f).zip(r.xhat.chunks(f)).enumerate() {
                        for j in 0..f {
                            let dxhat = grow[j] * gamma[j];
                            gx[i * f + j] =
                                r.inv_std[j] / n * (n * dxhat - gamma[j] * gbeta[j] - hrow[j] * gamma[j] * ggamma[j]);
                        }
                    }
                } else {
                    for (i, grow) in gs.chunks(f).enumerate() {
                        for j in 0..f {
                            gx[i * f + j] = grow[j] * gamma[j] * r.inv_std[j];
                        }
                    }
                }
                let shape_x = self.v(r.input).shape().to_vec();
                res.push((r.input, CTensor::from_real(&shape_x, gx)?));
                res.push((r.gamma, CTensor::from_real(self.v(r.gamma).shape(), ggamma)?));
                res.push((r.beta, CTensor::from_real(self.v(r.beta).shape(), gbeta)?));
            }
            Op::Dropout { input, mask } => {
                let data = g
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(z, m)| C64::new(z.re * m, 0.0))
                    .collect();
                res.push((*input, CTensor::raw(g.shape().to_vec(), data, true)));
            }
            Op::Concat(parts) => {
                let w_total = out.last_dim();
                let rows = out.len() / w_total.max(1);
                let mut offset = 0;
                for p in parts {
                    let tp = self.v(*p);
                    let w = tp.last_dim();
                    let mut data = Vec::with_capacity(tp.len());
                    for r in 0..rows {
                        data.extend_from_slice(&g.data()[r * w_total + offset..r * w_total + offset + w]);
                    }
                    offset += w;
                    res.push((*p, CTensor::raw(tp.shape().to_vec(), data, g.is_real())));
                }
            }
            Op::Slice { input, start } => {
                let ta = self.v(*input);
                let w = ta.last_dim();
                let len = out.last_dim();
                let mut data = vec![ZERO; ta.len()];
                for (drow, grow) in data.chunks_mut(w).zip(g.data().chunks(len.max(1))) {
                    drow[*start..*start + len].copy_from_slice(grow);
                }
                res.push((*input, CTensor::raw(ta.shape().to_vec(), data, g.is_real())));
            }
            Op::Reshape(a) => {
                res.push((*a, g.clone().reshaped(self.v(*a).shape())?));
            }
            Op::Complex(re, im) => {
                res.push((*re, map(g, true, |z| C64::new(z.re, 0.0))));
                res.push((*im, map(g, true, |z| C64::new(z.im, 0.0))));
            }
            Op::RealPart(a) => res.push((*a, map(g, false, |z| C64::new(z.re, 0.0)))),
            Op::ImagPart(a) => res.push((*a, map(g, false, |z| C64::new(0.0, z.re)))),
            Op::Diag(a) => {
                let ta = self.v(*a);
                let (n, _) = ta.last2();
                let mut data = vec![ZERO; ta.len()];
                for (m, d) in data.chunks_mut(n * n).zip(g.data().chunks(n)) {
                    for i in 0..n {
                        m[i * n + i] = d[i];
                    }
                }
                res.push((*a, CTensor::raw(ta.shape().to_vec(), data, g.is_real())));
            }
            Op::Expand { input, axis } => {
                let ta = self.v(*input);
                let outer: usize = ta.shape()[..*axis].iter().product();
                let inner: usize = ta.shape()[*axis..].iter().product();
                let n = out.shape()[*axis];
                let mut data = vec![ZERO; ta.len()];
                for o in 0..outer {
                    for r in 0..n {
                        let src = &g.data()[(o * n + r) * inner..(o * n + r + 1) * inner];
                        for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                res.push((*input, CTensor::raw(ta.shape().to_vec(), data, g.is_real())));
            }
            Op::Conv1d { input, kernel, bias } => {
                let (tx, tk) = (self.v(*input), self.v(*kernel));
                let (bsz, len, cin) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (width, cout) = (tk.shape()[0], tk.shape()[2]);
                let pad = (width - 1) / 2;
                let xs = tx.re();
                let ks = tk.re();
                let gs = g.re();
                let mut gx = vec![0.0; xs.len()];
                let mut gk = vec![0.0; ks.len()];
                let mut gb = vec![0.0; cout];
                for b in 0..bsz {
                    for l in 0..len {
                        let grow = &gs[(b * len + l) * cout..(b * len + l + 1) * cout];
                        for (acc, gv) in gb.iter_mut().zip(grow) {
                            *acc += gv;
                        }
                        for t in 0..width {
                            let src = l + t;
                            if src < pad || src - pad >= len {
                                continue;
                            }
                            let xoff = (b * len + src - pad) * cin;
                            for c in 0..cin {
                                let koff = (t * cin + c) * cout;
                                let mut acc = 0.0;
                                for o in 0..cout {
                                    acc += grow[o] * ks[koff + o];
                                    gk[koff + o] += grow[o] * xs[xoff + c];
                                }
                                gx[xoff + c] += acc;
                            }
                        }
                    }
                }
                res.push((*input, CTensor::from_real(tx.shape(), gx)?));
                res.push((*kernel, CTensor::from_real(tk.shape(), gk)?));
                res.push((*bias, CTensor::from_real(self.v(*bias).shape(), gb)?));
            }
        }
        Ok(res)
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Input => "input",
        Op::Variable => "variable",
        Op::Param(_) => "param",
        Op::MatMul(..) => "matmul",
        Op::Adjoint(_) => "adjoint",
        Op::Transpose(_) => "transpose",
        Op::Conj(_) => "conj",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Scale(..) => "scale",
        Op::AddScalar(_) => "add_scalar",
        Op::AddBcast(..) => "add_bcast",
        Op::MulBcast(..) => "mul_bcast",
        Op::Inverse { .. } => "inverse",
        Op::Abs2(_) => "abs2",
        Op::SumLast(_) => "sum_last",
        Op::SumAll(_) => "sum_all",
        Op::Sqrt(_) => "sqrt",
        Op::Log(_) => "log",
        Op::Tanh(_) => "tanh",
        Op::Relu(_) => "relu",
        Op::Softmax(_) => "softmax",
        Op::BatchNorm(_) => "batch_norm",
        Op::Dropout { .. } => "dropout",
        Op::Concat(_) => "concat",
        Op::Slice { .. } => "slice",
        Op::Reshape(_) => "reshape",
        Op::Complex(..) => "complex",
        Op::RealPart(_) => "real_part",
        Op::ImagPart(_) => "imag_part",
        Op::Diag(_) => "diag",
        Op::Expand { .. } => "expand",
        Op::Norm(_) => "norm",
        Op::Conv1d { .. } => "conv1d",
    }
}

/// Debug label for a node, mostly for error messages.
pub fn describe(graph: &Graph, id: NodeId) -> String {
    alloc::format!(
        "{}#{} {:?}",
        op_name(&graph.nodes[id.0].op),
        id.0,
        graph.nodes[id.0].value.shape()
    )
}

#[cfg(test)]
mod tests;

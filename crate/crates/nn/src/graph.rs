//! Tape-based reverse-mode differentiation.
//!
//! Every op evaluates eagerly and appends a node; [`Graph::backward`] walks the
//! tape in reverse. Parameter leaves borrow their values from the
//! [`ParamStore`] so building a graph never copies weights.

use std::rc::Rc;

use rand::RngCore;

use crate::error::{shape_err, NnError, Result};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
        batch: usize,
        shared_b: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax(Var),
    LogSoftmax(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Reshape(Var),
    SplitHeads {
        x: Var,
        batch: usize,
        len: usize,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        batch: usize,
        len: usize,
        heads: usize,
    },
    Sum(Var),
    Mean(Var),
    SmoothedNll {
        logits: Var,
        targets: Vec<usize>,
        smoothing: T,
        pad: Option<usize>,
        probs: Vec<T>,
        count: usize,
    },
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, ParamId)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of a leaf (parameter, variable or constant marked for grad).
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Adds the gradient of every parameter leaf into the store accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for &(node, id) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.grad_mut(id).add_in_place(g);
            }
        }
    }
}

/// Boolean keep-mask shared between attention calls.
pub type Mask = Rc<Vec<bool>>;

pub struct Graph<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    rng: Option<&'p mut dyn RngCore>,
    grad_enabled: bool,
}

fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_in_place(&g),
        slot => *slot = Some(g),
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

impl<'p, T: Scalar> Graph<'p, T> {
    /// Graph in inference mode: dropout is the identity.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            rng: None,
            grad_enabled: true,
        }
    }

    /// Graph in training mode; dropout masks are drawn from `rng`.
    pub fn training(params: &'p ParamStore<T>, rng: &'p mut dyn RngCore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            rng: Some(rng),
            grad_enabled: true,
        }
    }

    /// Skips recording backward data (saves memory during decoding).
    pub fn no_grad(mut self) -> Self {
        self.grad_enabled = false;
        self
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.value(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, op: &'static str, value: Tensor<T>, node_op: Op<T>, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(NnError::NonFinite { op });
        }
        let needs_grad = self.grad_enabled && parents.iter().any(|&p| self.needs(p));
        let node_op = if needs_grad { node_op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: node_op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf that is not a stored parameter.
    pub fn variable(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            needs_grad: self.grad_enabled,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            needs_grad: self.grad_enabled,
        });
        Var(self.nodes.len() - 1)
    }

    /// Batched matrix product over the trailing two dimensions. `b` may be
    /// rank 2, in which case it is shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let (ra, ca) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (rb, cb) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (m, k) = if trans_a { (ca, ra) } else { (ra, ca) };
        let (kb, n) = if trans_b { (cb, rb) } else { (rb, cb) };
        let batch_dims = &sa[..sa.len() - 2];
        let shared_b = sb.len() == 2;
        if k != kb || (!shared_b && &sb[..sb.len() - 2] != batch_dims) {
            return Err(shape_err("matmul", format!("{sa:?} x {sb:?}")));
        }
        let batch: usize = batch_dims.iter().product();
        let mut out = vec![T::zero(); batch * m * n];
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for i in 0..batch {
                let bs = if shared_b { 0 } else { i * k * n };
                T::gemm(
                    m,
                    k,
                    n,
                    &av[i * m * k..(i + 1) * m * k],
                    trans_a,
                    &bv[bs..bs + k * n],
                    trans_b,
                    &mut out[i * m * n..(i + 1) * m * n],
                    false,
                );
            }
        }
        let mut shape = batch_dims.to_vec();
        shape.extend([m, n]);
        let value = Tensor::new(&shape, out)?;
        self.push(
            "matmul",
            value,
            Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
                batch,
                shared_b,
                m,
                k,
                n,
            },
            &[a, b],
        )
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_in_place(self.value(b));
        self.push("add", value, Op::Add(a, b), &[a, b])
    }

    /// `x + bias`, broadcasting `bias` (rank 1) over the trailing dimension.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.shape(bias) != [d] {
            return Err(shape_err(
                "add_bias",
                format!("{:?} + {:?}", self.shape(x), self.shape(bias)),
            ));
        }
        let mut value = self.value(x).clone();
        let bv = self.value(bias).data();
        for row in value.data_mut().chunks_mut(d) {
            for (r, &b) in row.iter_mut().zip(bv) {
                *r += b;
            }
        }
        self.push("add_bias", value, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let bv = self.value(b).data();
        let data = self.value(a).data().iter().zip(bv).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.shape(a), data)?;
        self.push("mul", value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let mut value = self.value(x).clone();
        value.scale_in_place(factor);
        self.push("scale", value, Op::Scale(x, factor), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let value = Tensor::new(xv.shape(), xv.data().iter().map(|&v| v.max(T::zero())).collect())?;
        self.push("relu", value, Op::Relu(x), &[x])
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let (c, k) = (T::lit(SQRT_2_OVER_PI), T::lit(GELU_C));
        let half = T::lit(0.5);
        let xv = self.value(x);
        let value = Tensor::new(
            xv.shape(),
            xv.data()
                .iter()
                .map(|&v| half * v * (T::one() + (c * (v + k * v * v * v)).tanh()))
                .collect(),
        )?;
        self.push("gelu", value, Op::Gelu(x), &[x])
    }

    /// Layer normalization over the trailing dimension.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(shape_err(
                "layer_norm",
                format!("input {:?}, gain {:?}", self.shape(x), self.shape(gamma)),
            ));
        }
        let eps = T::lit(eps);
        let dn = T::from_usize(d).unwrap();
        let xv = self.value(x);
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = xv.rows();
        let mut xhat = vec![T::zero(); xv.numel()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xv.numel()];
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::new(xv.shape(), out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    fn softmax_rows(data: &[T], d: usize, keep: Option<&[bool]>) -> Vec<T> {
        let mut out = vec![T::zero(); data.len()];
        for (r, row) in data.chunks(d).enumerate() {
            let kept = |j: usize| keep.is_none_or(|m| m[r * d + j]);
            let mut max = T::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if kept(j) && v > max {
                    max = v;
                }
            }
            if max == T::neg_infinity() {
                continue; // fully masked row stays zero
            }
            let mut sum = T::zero();
            for (j, &v) in row.iter().enumerate() {
                if kept(j) {
                    let e = (v - max).exp();
                    out[r * d + j] = e;
                    sum += e;
                }
            }
            for o in &mut out[r * d..(r + 1) * d] {
                *o /= sum;
            }
        }
        out
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let out = Self::softmax_rows(xv.data(), xv.last_dim(), None);
        let value = Tensor::new(xv.shape(), out)?;
        self.push("softmax", value, Op::Softmax(x), &[x])
    }

    /// Softmax over the trailing dimension restricted to positions where
    /// `keep` is true; excluded positions get probability exactly zero.
    pub fn masked_softmax(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        let xv = self.value(x);
        if keep.len() != xv.numel() {
            return Err(shape_err(
                "masked_softmax",
                format!("mask of {} for {:?}", keep.len(), xv.shape()),
            ));
        }
        let out = Self::softmax_rows(xv.data(), xv.last_dim(), Some(keep));
        let value = Tensor::new(xv.shape(), out)?;
        self.push("masked_softmax", value, Op::Softmax(x), &[x])
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.last_dim();
        let mut out = vec![T::zero(); xv.numel()];
        for (r, row) in xv.data().chunks(d).enumerate() {
            let lse = log_sum_exp(row);
            for (j, &v) in row.iter().enumerate() {
                out[r * d + j] = v - lse;
            }
        }
        let value = Tensor::new(xv.shape(), out)?;
        self.push("log_softmax", value, Op::LogSoftmax(x), &[x])
    }

    /// Gathers rows of `table` (`[vocab, dim]`), giving `[ids.len(), dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(shape_err("embedding", format!("table {:?}", tv.shape())));
        }
        let (vocab, dim) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(shape_err("embedding", format!("id {id} >= {vocab}")));
            }
            out.extend_from_slice(tv.row(id));
        }
        let value = Tensor::new(&[ids.len(), dim], out)?;
        self.push(
            "embedding",
            value,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Inverted dropout. Identity outside training mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::InvalidArgument(format!("dropout rate {p}")));
        }
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let n = match &self.nodes[x.0].value {
            Value::Owned(t) => t.numel(),
            Value::Param(id) => self.params.value(*id).numel(),
        };
        let keep_scale = T::lit(1.0 / (1.0 - p));
        let threshold = (p * u32::MAX as f64) as u32;
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if rng.next_u32() < threshold {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(xv.shape(), data)?;
        self.push("dropout", value, Op::Dropout { x, mask }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(x), &[x])
    }

    /// `[batch, len, heads * dh]` -> `[batch * heads, len, dh]`.
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || heads == 0 || s[2] % heads != 0 {
            return Err(shape_err("split_heads", format!("{s:?} into {heads}")));
        }
        let (batch, len, d) = (s[0], s[1], s[2]);
        let dh = d / heads;
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..batch {
            for t in 0..len {
                for h in 0..heads {
                    let src = (b * len + t) * d + h * dh;
                    let dst = ((b * heads + h) * len + t) * dh;
                    out[dst..dst + dh].copy_from_slice(&xv[src..src + dh]);
                }
            }
        }
        let value = Tensor::new(&[batch * heads, len, dh], out)?;
        self.push("split_heads", value, Op::SplitHeads { x, batch, len, heads }, &[x])
    }

    /// Inverse of [`Graph::split_heads`].
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 3 || heads == 0 || s[0] % heads != 0 {
            return Err(shape_err("merge_heads", format!("{s:?} from {heads}")));
        }
        let (batch, len, dh) = (s[0] / heads, s[1], s[2]);
        let d = dh * heads;
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        for b in 0..batch {
            for t in 0..len {
                for h in 0..heads {
                    let dst = (b * len + t) * d + h * dh;
                    let src = ((b * heads + h) * len + t) * dh;
                    out[dst..dst + dh].copy_from_slice(&xv[src..src + dh]);
                }
            }
        }
        let value = Tensor::new(&[batch, len, d], out)?;
        self.push("merge_heads", value, Op::MergeHeads { x, batch, len, heads }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = T::from_usize(xv.numel().max(1)).unwrap();
        let s = xv.data().iter().copied().sum::<T>() / n;
        self.push("mean", Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Scaled dot-product attention on split heads. `q` is `[bh, tq, dh]`,
    /// `k`/`v` are `[bh, tk, dh]`, `keep` has `bh * tq * tk` entries. Returns
    /// the attended values and the attention weights.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, keep: &[bool]) -> Result<(Var, Var)> {
        let dh = self.value(q).last_dim();
        let scores = self.matmul(q, k, false, true)?;
        let scores = self.scale(scores, T::one() / T::from_usize(dh).unwrap().sqrt())?;
        let weights = self.masked_softmax(scores, keep)?;
        let out = self.matmul(weights, v, false, false)?;
        Ok((out, weights))
    }

    /// Label-smoothed negative log-likelihood averaged over non-pad rows of
    /// `logits` (`[n, vocab]`):
    /// `(1 - eps) * -log p(target) + eps * mean_v(-log p(v))`.
    pub fn label_smoothed_nll(
        &mut self,
        logits: Var,
        targets: &[usize],
        smoothing: f64,
        pad: Option<usize>,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&smoothing) {
            return Err(NnError::InvalidArgument(format!(
                "label smoothing {smoothing} outside [0, 1)"
            )));
        }
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.shape()[0] != targets.len() {
            return Err(shape_err(
                "label_smoothed_nll",
                format!("logits {:?} for {} targets", lv.shape(), targets.len()),
            ));
        }
        let vocab = lv.shape()[1];
        let eps = T::lit(smoothing);
        let vn = T::from_usize(vocab).unwrap();
        let mut probs = vec![T::zero(); lv.numel()];
        let mut total = T::zero();
        let mut count = 0usize;
        for (r, &t) in targets.iter().enumerate() {
            if t >= vocab {
                return Err(NnError::TargetOutOfRange { id: t, vocab });
            }
            if Some(t) == pad {
                continue;
            }
            count += 1;
            let row = lv.row(r);
            let lse = log_sum_exp(row);
            let mut sum_nll = T::zero();
            for (j, &v) in row.iter().enumerate() {
                let lp = v - lse;
                probs[r * vocab + j] = lp.exp();
                sum_nll -= lp;
            }
            let nll = lse - row[t];
            total += (T::one() - eps) * nll + eps * sum_nll / vn;
        }
        let loss = if count == 0 {
            T::zero()
        } else {
            total / T::from_usize(count).unwrap()
        };
        self.push(
            "label_smoothed_nll",
            Tensor::scalar(loss),
            Op::SmoothedNll {
                logits,
                targets: targets.to_vec(),
                smoothing: eps,
                pad,
                probs,
                count,
            },
            &[logits],
        )
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(shape_err("backward", format!("loss has shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            // interior gradients are dropped once propagated; only leaves keep theirs
            let Some(g) = grads[i].take() else { continue };
            if !g.is_finite() {
                return Err(NnError::NonFinite { op: "backward" });
            }
            self.backward_node(i, &g, &mut grads)?;
        }
        for (g, node) in grads.iter().zip(&self.nodes) {
            if let Some(g) = g {
                if node.needs_grad && !g.is_finite() {
                    return Err(NnError::NonFinite { op: "backward" });
                }
            }
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.value {
                Value::Param(id) if n.needs_grad => Some((i, id)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, params })
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let out = self.value(Var(i));
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                trans_a,
                trans_b,
                batch,
                shared_b,
                m,
                k,
                n,
            } => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                let gv = g.data();
                if self.needs(a) {
                    let mut da = vec![T::zero(); batch * m * k];
                    for bi in 0..batch {
                        let bs = if shared_b { 0 } else { bi * k * n };
                        let bsl = &bv[bs..bs + k * n];
                        let gsl = &gv[bi * m * n..(bi + 1) * m * n];
                        let dsl = &mut da[bi * m * k..(bi + 1) * m * k];
                        if trans_a {
                            // stored [k, m] = B_log * dC^T
                            T::gemm(k, n, m, bsl, trans_b, gsl, true, dsl, false);
                        } else {
                            T::gemm(m, n, k, gsl, false, bsl, !trans_b, dsl, false);
                        }
                    }
                    acc(grads, a, Tensor::new(self.shape(a), da)?);
                }
                if self.needs(b) {
                    let mut db = vec![T::zero(); if shared_b { k * n } else { batch * k * n }];
                    for bi in 0..batch {
                        let asl = &av[bi * m * k..(bi + 1) * m * k];
                        let gsl = &gv[bi * m * n..(bi + 1) * m * n];
                        let (dsl, accumulate) = if shared_b {
                            (&mut db[..], bi > 0)
                        } else {
                            (&mut db[bi * k * n..(bi + 1) * k * n], false)
                        };
                        if trans_b {
                            // stored [n, k] = dC^T * A_log
                            T::gemm(n, m, k, gsl, true, asl, trans_a, dsl, accumulate);
                        } else {
                            T::gemm(k, m, n, asl, !trans_a, gsl, false, dsl, accumulate);
                        }
                    }
                    acc(grads, b, Tensor::new(self.shape(b), db)?);
                }
            }
            &Op::Add(a, b) => {
                if self.needs(a) {
                    acc(grads, a, g.clone());
                }
                if self.needs(b) {
                    acc(grads, b, g.clone());
                }
            }
            &Op::AddBias(x, bias) => {
                if self.needs(x) {
                    acc(grads, x, g.clone());
                }
                if self.needs(bias) {
                    let d = g.last_dim();
                    let mut db = vec![T::zero(); d];
                    for row in g.data().chunks(d) {
                        for (o, &v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    acc(grads, bias, Tensor::new(&[d], db)?);
                }
            }
            &Op::Mul(a, b) => {
                if self.needs(a) {
                    let bv = self.value(b).data();
                    let d = g.data().iter().zip(bv).map(|(&x, &y)| x * y).collect();
                    acc(grads, a, Tensor::new(g.shape(), d)?);
                }
                if self.needs(b) {
                    let av = self.value(a).data();
                    let d = g.data().iter().zip(av).map(|(&x, &y)| x * y).collect();
                    acc(grads, b, Tensor::new(g.shape(), d)?);
                }
            }
            &Op::Scale(x, f) => {
                let mut d = g.clone();
                d.scale_in_place(f);
                acc(grads, x, d);
            }
            &Op::Relu(x) => {
                let xv = self.value(x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                acc(grads, x, Tensor::new(g.shape(), d)?);
            }
            &Op::Gelu(x) => {
                let (c, kc) = (T::lit(SQRT_2_OVER_PI), T::lit(GELU_C));
                let half = T::lit(0.5);
                let three = T::lit(3.0);
                let xv = self.value(x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&gv, &v)| {
                        let t = (c * (v + kc * v * v * v)).tanh();
                        let dt = c * (T::one() + three * kc * v * v);
                        gv * (half * (T::one() + t) + half * v * (T::one() - t * t) * dt)
                    })
                    .collect();
                acc(grads, x, Tensor::new(g.shape(), d)?);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = g.last_dim();
                let dn = T::from_usize(d).unwrap();
                let gam = self.value(*gamma).data();
                if self.needs(*x) {
                    let mut dx = vec![T::zero(); g.numel()];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gr = &g.data()[r * d..(r + 1) * d];
                        let xr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_x = T::zero();
                        for j in 0..d {
                            let dh = gr[j] * gam[j];
                            mean_dh += dh;
                            mean_dh_x += dh * xr[j];
                        }
                        mean_dh /= dn;
                        mean_dh_x /= dn;
                        for j in 0..d {
                            let dh = gr[j] * gam[j];
                            dx[r * d + j] = rs * (dh - mean_dh - xr[j] * mean_dh_x);
                        }
                    }
                    acc(grads, *x, Tensor::new(g.shape(), dx)?);
                }
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = vec![T::zero(); d];
                    let mut dbeta = vec![T::zero(); d];
                    for (r, gr) in g.data().chunks(d).enumerate() {
                        for j in 0..d {
                            dg[j] += gr[j] * xhat[r * d + j];
                            dbeta[j] += gr[j];
                        }
                    }
                    if self.needs(*gamma) {
                        acc(grads, *gamma, Tensor::new(&[d], dg)?);
                    }
                    if self.needs(*beta) {
                        acc(grads, *beta, Tensor::new(&[d], dbeta)?);
                    }
                }
            }
            &Op::Softmax(x) => {
                let d = g.last_dim();
                let y = out.data();
                let mut dx = vec![T::zero(); g.numel()];
                for (r, gr) in g.data().chunks(d).enumerate() {
                    let yr = &y[r * d..(r + 1) * d];
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for j in 0..d {
                        dx[r * d + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(grads, x, Tensor::new(g.shape(), dx)?);
            }
            &Op::LogSoftmax(x) => {
                let d = g.last_dim();
                let y = out.data();
                let mut dx = vec![T::zero(); g.numel()];
                for (r, gr) in g.data().chunks(d).enumerate() {
                    let s: T = gr.iter().copied().sum();
                    for j in 0..d {
                        dx[r * d + j] = gr[j] - y[r * d + j].exp() * s;
                    }
                }
                acc(grads, x, Tensor::new(g.shape(), dx)?);
            }
            Op::Embedding { table, ids } => {
                let tshape = self.shape(*table).to_vec();
                let dim = tshape[1];
                let mut dt = vec![T::zero(); tshape[0] * dim];
                for (r, &id) in ids.iter().enumerate() {
                    let src = &g.data()[r * dim..(r + 1) * dim];
                    for (o, &v) in dt[id * dim..(id + 1) * dim].iter_mut().zip(src) {
                        *o += v;
                    }
                }
                acc(grads, *table, Tensor::new(&tshape, dt)?);
            }
            Op::Dropout { x, mask } => {
                let d = g.data().iter().zip(mask).map(|(&a, &m)| a * m).collect();
                acc(grads, *x, Tensor::new(g.shape(), d)?);
            }
            &Op::Reshape(x) => {
                let d = g.clone().reshape(self.shape(x))?;
                acc(grads, x, d);
            }
            &Op::SplitHeads { x, batch, len, heads } => {
                let d = self.value(x).last_dim();
                let dh = d / heads;
                let gv = g.data();
                let mut dx = vec![T::zero(); gv.len()];
                for b in 0..batch {
                    for t in 0..len {
                        for h in 0..heads {
                            let dst = (b * len + t) * d + h * dh;
                            let src = ((b * heads + h) * len + t) * dh;
                            dx[dst..dst + dh].copy_from_slice(&gv[src..src + dh]);
                        }
                    }
                }
                acc(grads, x, Tensor::new(self.shape(x), dx)?);
            }
            &Op::MergeHeads { x, batch, len, heads } => {
                let dh = self.value(x).last_dim();
                let d = dh * heads;
                let gv = g.data();
                let mut dx = vec![T::zero(); gv.len()];
                for b in 0..batch {
                    for t in 0..len {
                        for h in 0..heads {
                            let src = (b * len + t) * d + h * dh;
                            let dst = ((b * heads + h) * len + t) * dh;
                            dx[dst..dst + dh].copy_from_slice(&gv[src..src + dh]);
                        }
                    }
                }
                acc(grads, x, Tensor::new(self.shape(x), dx)?);
            }
            &Op::Sum(x) => {
                acc(grads, x, Tensor::full(self.shape(x), g.item()));
            }
            &Op::Mean(x) => {
                let n = T::from_usize(self.value(x).numel().max(1)).unwrap();
                acc(grads, x, Tensor::full(self.shape(x), g.item() / n));
            }
            Op::SmoothedNll {
                logits,
                targets,
                smoothing,
                pad,
                probs,
                count,
            } => {
                let shape = self.shape(*logits).to_vec();
                let vocab = shape[1];
                let mut dl = vec![T::zero(); probs.len()];
                if *count > 0 {
                    let scale = g.item() / T::from_usize(*count).unwrap();
                    let uniform = *smoothing / T::from_usize(vocab).unwrap();
                    for (r, &t) in targets.iter().enumerate() {
                        if Some(t) == *pad {
                            continue;
                        }
                        for j in 0..vocab {
                            let mut q = uniform;
                            if j == t {
                                q += T::one() - *smoothing;
                            }
                            dl[r * vocab + j] = scale * (probs[r * vocab + j] - q);
                        }
                    }
                }
                acc(grads, *logits, Tensor::new(&shape, dl)?);
            }
        }
        Ok(())
    }
}

pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f64> {
        ParamStore::new()
    }

    #[test]
    fn sum_has_all_ones_gradient() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.variable(Tensor::from_fn(&[2, 3], |i| i as f64 - 1.5));
        let y = g.sum(x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::from_fn(&[4, 7], |i| ((i * 37) % 11) as f64 - 5.0));
        let y = g.softmax(x).unwrap();
        for r in 0..4 {
            let total: f64 = g.value(y).row(r).iter().sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_softmax_zeroes_excluded_positions() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::from_fn(&[2, 3], |i| i as f64));
        let keep = [true, false, true, false, true, true];
        let y = g.masked_softmax(x, &keep).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[1], 0.0);
        assert_eq!(v[3], 0.0);
        assert!((v[0] + v[2] - 1.0).abs() < 1e-12);
        assert!((v[4] + v[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let s = store();
        let mut g = Graph::new(&s);
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[4, 2]));
        assert!(matches!(
            g.matmul(a, b, false, false),
            Err(NnError::ShapeMismatch { .. })
        ));
        assert!(g.matmul(a, b, true, true).is_ok());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::full(&[2], f64::MAX));
        let err = g.mul(x, x).unwrap_err();
        assert!(matches!(err, NnError::NonFinite { op: "mul" }));
    }

    #[test]
    fn nll_target_out_of_vocab_is_an_error() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            g.label_smoothed_nll(x, &[3], 0.1, None),
            Err(NnError::TargetOutOfRange { id: 3, vocab: 3 })
        ));
    }

    #[test]
    fn split_then_merge_heads_is_identity() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::from_fn(&[2, 3, 8], |i| i as f64));
        let h = g.split_heads(x, 4).unwrap();
        assert_eq!(g.shape(h), &[8, 3, 2]);
        let m = g.merge_heads(h, 4).unwrap();
        assert_eq!(g.value(m), g.value(x));
    }

    #[test]
    fn dropout_is_identity_in_inference_mode() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::full(&[10], 1.0));
        let y = g.dropout(x, 0.5).unwrap();
        assert_eq!(x, y);
    }
}

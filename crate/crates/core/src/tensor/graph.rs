//! Define-by-run computation tape.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and backward is a single reverse sweep.

use super::kernels::{self, ConvGeometry};
use super::{Element, Tensor};
use crate::error::{LclError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Per-channel batch statistics produced by a training-mode batch norm.
/// `var` is the biased (population) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: NodeId,
        weight: NodeId,
        geom: ConvGeometry,
    },
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Relu {
        input: NodeId,
    },
    Sigmoid {
        input: NodeId,
    },
    Add {
        lhs: NodeId,
        rhs: NodeId,
    },
    Mul {
        lhs: NodeId,
        rhs: NodeId,
    },
    Sum {
        input: NodeId,
    },
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    Reshape {
        input: NodeId,
    },
    ContrastiveLoss {
        input: NodeId,
        targets: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T: Element = f32> {
    nodes: Vec<Node<T>>,
    corrupt_relu: bool,
}

/// Gradients of a scalar w.r.t. every node that required one.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Element>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(LclError::shape(format!(
            "{what}: operand shapes differ ({} vs {})",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn accumulate<T: Element>(slot: &mut Option<Vec<T>>, delta: Vec<T>) {
    match slot {
        Some(acc) => {
            for (a, d) in acc.iter_mut().zip(delta) {
                *a = *a + d;
            }
        }
        None => *slot = Some(delta),
    }
}

/// Clamp bound applied to activations inside the contrastive loss.
pub const LOSS_CLAMP: f64 = 1e-7;

pub(crate) fn clamp_activation<T: Element>(a: T) -> T {
    let lo = T::from_f64(LOSS_CLAMP);
    let hi = T::one() - lo;
    a.max(lo).min(hi)
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            corrupt_relu: false,
        }
    }

    /// Test fixture: make relu's backward pass ignore its mask so that
    /// gradient checks have something to catch.
    #[doc(hidden)]
    pub fn corrupt_relu_backward(&mut self) {
        self.corrupt_relu = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node<T>> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| LclError::contract(format!("node {} does not belong to this graph", id.0)))
    }

    fn needs_grad(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Cross-correlation of `[B,C,H,W]` with `[F,C,k,k]` square kernels.
    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let x = &self.node(input)?.value;
        let w = &self.node(weight)?.value;
        let (xd, wd) = (x.dims(), w.dims());
        if xd.len() != 4 || wd.len() != 4 {
            return Err(LclError::shape(format!(
                "conv2d expects 4-d input and weight, got {} and {}",
                x.shape(),
                w.shape()
            )));
        }
        if xd[1] != wd[1] {
            return Err(LclError::shape(format!(
                "conv2d: input has {} channels but weight expects {}",
                xd[1], wd[1]
            )));
        }
        if wd[2] != wd[3] || !matches!(wd[2], 1 | 3) {
            return Err(LclError::shape(format!(
                "conv2d supports 3x3 (and 1x1 projection) kernels, got {}x{}",
                wd[2], wd[3]
            )));
        }
        if !matches!(stride, 1 | 2) || !matches!(pad, 0 | 1) {
            return Err(LclError::contract(format!(
                "conv2d: stride must be 1 or 2 and pad 0 or 1 (got stride {stride}, pad {pad})"
            )));
        }
        let k = wd[2];
        let out_height = kernels::conv_output_extent(xd[2], k, stride, pad);
        let out_width = kernels::conv_output_extent(xd[3], k, stride, pad);
        let (Some(out_height), Some(out_width)) = (out_height, out_width) else {
            return Err(LclError::shape(format!(
                "conv2d: {}x{} input too small for a {k}x{k} kernel with pad {pad}",
                xd[2], xd[3]
            )));
        };
        let geom = ConvGeometry {
            batch: xd[0],
            in_channels: xd[1],
            out_channels: wd[0],
            height: xd[2],
            width: xd[3],
            kernel: k,
            stride,
            pad,
            out_height,
            out_width,
        };
        let out = kernels::conv2d_forward(&geom, x.data(), w.data());
        let value = Tensor::new(vec![geom.batch, geom.out_channels, out_height, out_width], out)?;
        let rg = self.needs_grad(&[input, weight]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                geom,
            },
            rg,
        ))
    }

    fn bn_check(&self, input: NodeId, gamma: NodeId, beta: NodeId) -> Result<(usize, usize, usize)> {
        let x = &self.node(input)?.value;
        let xd = x.dims();
        if xd.len() != 4 {
            return Err(LclError::shape(format!("batch_norm expects [B,C,H,W], got {}", x.shape())));
        }
        let c = xd[1];
        self.node(gamma)?.value.expect_dims("batch_norm gamma", &[c])?;
        self.node(beta)?.value.expect_dims("batch_norm beta", &[c])?;
        Ok((xd[0], c, xd[2] * xd[3]))
    }

    fn bn_apply(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        inv_std: Vec<T>,
        batch_stats: bool,
    ) -> NodeId {
        let x = &self.nodes[input.0].value;
        let xd = x.dims();
        let (b, c, plane) = (xd[0], xd[1], xd[2] * xd[3]);
        let g = self.nodes[gamma.0].value.data();
        let bt = self.nodes[beta.0].value.data();
        let mut xhat = vec![T::zero(); x.numel()];
        let mut out = vec![T::zero(); x.numel()];
        for n in 0..b {
            for ch in 0..c {
                let off = (n * c + ch) * plane;
                let src = &x.data()[off..off + plane];
                for i in 0..plane {
                    let h = (src[i] - mean[ch]) * inv_std[ch];
                    xhat[off + i] = h;
                    out[off + i] = g[ch] * h + bt[ch];
                }
            }
        }
        let value = Tensor::from_parts(x.shape().clone(), out);
        let rg = self.needs_grad(&[input, gamma, beta]);
        self.push(
            value,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            rg,
        )
    }

    /// Batch norm with statistics computed over (B, H, W) of this batch.
    pub fn batch_norm_train(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<(NodeId, BatchStats<T>)> {
        let (b, c, plane) = self.bn_check(input, gamma, beta)?;
        let x = self.nodes[input.0].value.data();
        let count = T::from_f64((b * plane) as f64);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ch in 0..c {
            let mut s = T::zero();
            for n in 0..b {
                s = s + x[(n * c + ch) * plane..][..plane].iter().copied().sum::<T>();
            }
            let m = s / count;
            let mut v = T::zero();
            for n in 0..b {
                for &val in &x[(n * c + ch) * plane..][..plane] {
                    let d = val - m;
                    v = v + d * d;
                }
            }
            mean[ch] = m;
            var[ch] = v / count;
        }
        let eps = T::from_f64(eps);
        let inv_std = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let id = self.bn_apply(input, gamma, beta, &mean, inv_std, true);
        Ok((id, BatchStats { mean, var }))
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: &[T],
        var: &[T],
        eps: f64,
    ) -> Result<NodeId> {
        let (_, c, _) = self.bn_check(input, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(LclError::shape(format!(
                "batch_norm: running stats have {}/{} channels, input has {c}",
                mean.len(),
                var.len()
            )));
        }
        let eps = T::from_f64(eps);
        let inv_std = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        Ok(self.bn_apply(input, gamma, beta, mean, inv_std, false))
    }

    fn unary(&mut self, input: NodeId, f: impl Fn(T) -> T, op: Op<T>) -> Result<NodeId> {
        let x = &self.node(input)?.value;
        let data = x.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::from_parts(x.shape().clone(), data);
        let rg = self.nodes[input.0].requires_grad;
        Ok(self.push(value, op, rg))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.unary(input, |v| if v > T::zero() { v } else { T::zero() }, Op::Relu { input })
    }

    /// Logistic function, evaluated in the branch that never overflows `exp`.
    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId> {
        self.unary(input, stable_sigmoid, Op::Sigmoid { input })
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let (a, b) = (&self.node(lhs)?.value, &self.node(rhs)?.value);
        same_shape("add", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_parts(a.shape().clone(), data);
        let rg = self.needs_grad(&[lhs, rhs]);
        Ok(self.push(value, Op::Add { lhs, rhs }, rg))
    }

    pub fn mul(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let (a, b) = (&self.node(lhs)?.value, &self.node(rhs)?.value);
        same_shape("mul", a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_parts(a.shape().clone(), data);
        let rg = self.needs_grad(&[lhs, rhs]);
        Ok(self.push(value, Op::Mul { lhs, rhs }, rg))
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let total: T = self.node(input)?.value.data().iter().copied().sum();
        let rg = self.nodes[input.0].requires_grad;
        Ok(self.push(Tensor::scalar(total), Op::Sum { input }, rg))
    }

    /// `input[B,D] * weight[D,M] + bias[M]`.
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let x = &self.node(input)?.value;
        let w = &self.node(weight)?.value;
        let bv = &self.node(bias)?.value;
        let (xd, wd) = (x.dims(), w.dims());
        if xd.len() != 2 || wd.len() != 2 || xd[1] != wd[0] {
            return Err(LclError::shape(format!(
                "dense: cannot multiply {} by {}",
                x.shape(),
                w.shape()
            )));
        }
        let (rows, inner, cols) = (xd[0], xd[1], wd[1]);
        bv.expect_dims("dense bias", &[cols])?;
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            out.extend_from_slice(bv.data());
        }
        T::gemm(
            rows,
            inner,
            cols,
            T::one(),
            x.data(),
            inner as isize,
            1,
            w.data(),
            cols as isize,
            1,
            T::one(),
            &mut out,
            cols as isize,
            1,
        );
        let value = Tensor::new(vec![rows, cols], out)?;
        let rg = self.needs_grad(&[input, weight, bias]);
        Ok(self.push(value, Op::Dense { input, weight, bias }, rg))
    }

    /// Mean over the spatial extents: `[B,C,H,W] -> [B,C]`.
    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let x = &self.node(input)?.value;
        let xd = x.dims();
        if xd.len() != 4 {
            return Err(LclError::shape(format!(
                "global_avg_pool expects [B,C,H,W], got {}",
                x.shape()
            )));
        }
        let plane = xd[2] * xd[3];
        let scale = T::from_f64(1.0 / plane as f64);
        let data = x
            .data()
            .chunks_exact(plane)
            .map(|c| c.iter().copied().sum::<T>() * scale)
            .collect();
        let value = Tensor::new(vec![xd[0], xd[1]], data)?;
        let rg = self.nodes[input.0].requires_grad;
        Ok(self.push(value, Op::GlobalAvgPool { input }, rg))
    }

    pub fn reshape(&mut self, input: NodeId, dims: impl Into<Vec<usize>>) -> Result<NodeId> {
        let value = self.node(input)?.value.clone().reshape(dims)?;
        let rg = self.nodes[input.0].requires_grad;
        Ok(self.push(value, Op::Reshape { input }, rg))
    }

    /// Mean binary cross-entropy between activations `[N,L]` and 0/1 targets,
    /// with activations clamped to `[1e-7, 1 - 1e-7]`.
    ///
    /// Exactly one target per row must be 0 (the positive contrastive object).
    pub fn contrastive_loss(&mut self, input: NodeId, targets: &Tensor<T>) -> Result<NodeId> {
        let a = &self.node(input)?.value;
        if a.dims().len() != 2 {
            return Err(LclError::shape(format!(
                "contrastive_loss expects [N,L] activations, got {}",
                a.shape()
            )));
        }
        same_shape("contrastive_loss", a, targets)?;
        validate_targets(targets)?;
        let loss = contrastive_loss_value(a.data(), targets.data());
        let rg = self.nodes[input.0].requires_grad;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::ContrastiveLoss {
                input,
                targets: targets.data().to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a one-element node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        let root = self.node(loss)?;
        if !root.value.shape().is_scalar() {
            return Err(LclError::contract(format!(
                "backward needs a scalar loss, got shape {}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].as_ref() else {
                continue;
            };
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let g = g.clone();
            for (target, delta) in self.local_backward(node, &g) {
                if self.nodes[target.0].requires_grad {
                    accumulate(&mut grads[target.0], delta);
                }
            }
            // interior gradients are only kept for leaves and the root
            if idx != loss.0 {
                grads[idx] = None;
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::from_parts(n.value.shape().clone(), g)))
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn local_backward(&self, node: &Node<T>, g: &[T]) -> Vec<(NodeId, Vec<T>)> {
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                geom,
            } => {
                let (dx, dw) = kernels::conv2d_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    self.wants(*input),
                    self.wants(*weight),
                );
                if let Some(dx) = dx {
                    out.push((*input, dx));
                }
                if let Some(dw) = dw {
                    out.push((*weight, dw));
                }
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let dims = node.value.dims();
                let (b, c, plane) = (dims[0], dims[1], dims[2] * dims[3]);
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                for n in 0..b {
                    for ch in 0..c {
                        let off = (n * c + ch) * plane;
                        for i in off..off + plane {
                            dbeta[ch] = dbeta[ch] + g[i];
                            dgamma[ch] = dgamma[ch] + g[i] * xhat[i];
                        }
                    }
                }
                if self.wants(*input) {
                    let gam = self.value(*gamma).data();
                    let mut dx = vec![T::zero(); g.len()];
                    let count = T::from_f64((b * plane) as f64);
                    for ch in 0..c {
                        let scale = gam[ch] * inv_std[ch];
                        let (mean_dy, mean_dy_xhat) = if *batch_stats {
                            (dbeta[ch] / count, dgamma[ch] / count)
                        } else {
                            (T::zero(), T::zero())
                        };
                        for n in 0..b {
                            let off = (n * c + ch) * plane;
                            for i in off..off + plane {
                                dx[i] = scale * (g[i] - mean_dy - xhat[i] * mean_dy_xhat);
                            }
                        }
                    }
                    out.push((*input, dx));
                }
                out.push((*gamma, dgamma));
                out.push((*beta, dbeta));
            }
            Op::Relu { input } => {
                let x = self.value(*input).data();
                let dx = if self.corrupt_relu {
                    g.to_vec()
                } else {
                    x.iter()
                        .zip(g)
                        .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
                        .collect()
                };
                out.push((*input, dx));
            }
            Op::Sigmoid { input } => {
                let y = node.value.data();
                let dx = y.iter().zip(g).map(|(&s, &d)| d * s * (T::one() - s)).collect();
                out.push((*input, dx));
            }
            Op::Add { lhs, rhs } => {
                out.push((*lhs, g.to_vec()));
                out.push((*rhs, g.to_vec()));
            }
            Op::Mul { lhs, rhs } => {
                let (a, b) = (self.value(*lhs).data(), self.value(*rhs).data());
                out.push((*lhs, b.iter().zip(g).map(|(&y, &d)| y * d).collect()));
                out.push((*rhs, a.iter().zip(g).map(|(&x, &d)| x * d).collect()));
            }
            Op::Sum { input } => {
                out.push((*input, vec![g[0]; self.value(*input).numel()]));
            }
            Op::Dense { input, weight, bias } => {
                let x = self.value(*input);
                let w = self.value(*weight);
                let (rows, inner) = (x.dims()[0], x.dims()[1]);
                let cols = w.dims()[1];
                if self.wants(*input) {
                    // dx = g * W^T
                    let mut dx = vec![T::zero(); rows * inner];
                    T::gemm(
                        rows,
                        cols,
                        inner,
                        T::one(),
                        g,
                        cols as isize,
                        1,
                        w.data(),
                        1,
                        cols as isize,
                        T::zero(),
                        &mut dx,
                        inner as isize,
                        1,
                    );
                    out.push((*input, dx));
                }
                if self.wants(*weight) {
                    // dW = x^T * g
                    let mut dw = vec![T::zero(); inner * cols];
                    T::gemm(
                        inner,
                        rows,
                        cols,
                        T::one(),
                        x.data(),
                        1,
                        inner as isize,
                        g,
                        cols as isize,
                        1,
                        T::zero(),
                        &mut dw,
                        cols as isize,
                        1,
                    );
                    out.push((*weight, dw));
                }
                if self.wants(*bias) {
                    let mut db = vec![T::zero(); cols];
                    for row in g.chunks_exact(cols) {
                        for (acc, &d) in db.iter_mut().zip(row) {
                            *acc = *acc + d;
                        }
                    }
                    out.push((*bias, db));
                }
            }
            Op::GlobalAvgPool { input } => {
                let xd = self.value(*input).dims();
                let plane = xd[2] * xd[3];
                let scale = T::from_f64(1.0 / plane as f64);
                let mut dx = Vec::with_capacity(g.len() * plane);
                for &d in g {
                    dx.extend(std::iter::repeat_n(d * scale, plane));
                }
                out.push((*input, dx));
            }
            Op::Reshape { input } => out.push((*input, g.to_vec())),
            Op::ContrastiveLoss { input, targets } => {
                let a = self.value(*input).data();
                let lo = T::from_f64(LOSS_CLAMP);
                let hi = T::one() - lo;
                let scale = g[0] / T::from_f64(a.len() as f64);
                let da = a
                    .iter()
                    .zip(targets)
                    .map(|(&ai, &z)| {
                        if ai < lo || ai > hi {
                            T::zero()
                        } else {
                            -(z / ai - (T::one() - z) / (T::one() - ai)) * scale
                        }
                    })
                    .collect();
                out.push((*input, da));
            }
        }
        out
    }
}

pub(crate) fn stable_sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Exactly one zero per row, every entry 0 or 1.
pub(crate) fn validate_targets<T: Element>(targets: &Tensor<T>) -> Result<()> {
    let dims = targets.dims();
    if dims.len() != 2 {
        return Err(LclError::shape(format!("targets must be [N,L], got {}", targets.shape())));
    }
    for (row, z) in targets.data().chunks_exact(dims[1]).enumerate() {
        if z.iter().any(|&v| v != T::zero() && v != T::one()) {
            return Err(LclError::contract(format!("targets row {row} has a value outside {{0,1}}")));
        }
        let positives = z.iter().filter(|&&v| v == T::zero()).count();
        if positives != 1 {
            return Err(LclError::contract(format!(
                "targets row {row} marks {positives} positive objects; exactly one is required"
            )));
        }
    }
    Ok(())
}

pub(crate) fn contrastive_loss_value<T: Element>(a: &[T], z: &[T]) -> T {
    let total: T = a
        .iter()
        .zip(z)
        .map(|(&ai, &zi)| {
            let ac = clamp_activation(ai);
            -(zi * ac.ln() + (T::one() - zi) * (T::one() - ac).ln())
        })
        .sum();
    total / T::from_f64(a.len() as f64)
}

impl<T: Element> std::fmt::Debug for Graph<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph").field("nodes", &self.nodes.len()).finish()
    }
}

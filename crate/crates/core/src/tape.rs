//! Reverse-mode differentiation over a flat operation tape.
//!
//! A `Tape` records every operation in execution order, so traversing it
//! backwards visits nodes in reverse topological order. One tape serves one
//! forward/backward pass; training loops build a fresh tape per step.

use crate::error::{Error, Result};
use crate::ops::bn::{bn_backward, bn_forward, BnCache, BnMode, BnStats};
use crate::ops::conv::{conv2d_backward, conv2d_forward, ConvDims};
use crate::ops::pool;
use crate::ops::shuffle;
use crate::scalar::Scalar;
use crate::tensor::{same_shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Norm order for the loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossAlpha {
    L1,
    L2,
}

impl LossAlpha {
    pub fn from_u8(alpha: u8) -> Result<Self> {
        match alpha {
            1 => Ok(LossAlpha::L1),
            2 => Ok(LossAlpha::L2),
            other => Err(Error::argument(format!(
                "alpha must be 1 or 2, got {other}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            LossAlpha::L1 => 1,
            LossAlpha::L2 => 2,
        }
    }
}

enum Record<S: Scalar> {
    Leaf,
    Relu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    ScalarMul {
        x: NodeId,
        factor: S,
    },
    Sum {
        x: NodeId,
    },
    Conv2d {
        x: NodeId,
        kernels: NodeId,
        bias: NodeId,
        dims: ConvDims,
    },
    PoolToColumn {
        x: NodeId,
    },
    PoolToRow {
        x: NodeId,
    },
    Outer {
        col: NodeId,
        row: NodeId,
    },
    PixelShuffle {
        x: NodeId,
        r: usize,
    },
    PixelUnshuffle {
        x: NodeId,
        r: usize,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        cache: BnCache<S>,
    },
    ConcatChannels {
        parts: Vec<NodeId>,
    },
    LossNorm {
        a: NodeId,
        b: NodeId,
        alpha: LossAlpha,
    },
    DiffMapL1 {
        a: NodeId,
        b: NodeId,
    },
}

struct Node<S: Scalar> {
    value: Tensor<S>,
    requires_grad: bool,
    needs_grad: bool,
    record: Record<S>,
}

pub struct Tape<S: Scalar = f32> {
    nodes: Vec<Node<S>>,
    consumed: bool,
}

/// Gradients produced by one backward pass, indexed by node id.
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of the loss w.r.t. the node, `None` when the node was not
    /// reached (its gradient is zero).
    pub fn get(&self, id: NodeId) -> Option<&[S]> {
        self.grads[id.0].as_deref()
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    /// Whether the node is a leaf that accumulates gradients.
    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, requires_grad, Record::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> NodeId {
        self.leaf(value, false)
    }

    fn push(
        &mut self,
        value: Tensor<S>,
        requires_grad: bool,
        needs_grad: bool,
        record: Record<S>,
    ) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            requires_grad,
            needs_grad,
            record,
        });
        id
    }

    fn needs(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    // ---- elementwise ----

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.maximum(S::ZERO));
        let needs = self.needs(&[x]);
        self.push(value, false, needs, Record::Relu { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, false, needs, Record::Add { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, false, needs, Record::Sub { a, b }))
    }

    pub fn scalar_mul(&mut self, x: NodeId, factor: S) -> NodeId {
        let value = self.value(x).map(|v| v * factor);
        let needs = self.needs(&[x]);
        self.push(value, false, needs, Record::ScalarMul { x, factor })
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().map(|v| v.to_f64()).sum();
        let needs = self.needs(&[x]);
        self.push(
            Tensor::scalar(S::from_f64(total)),
            false,
            needs,
            Record::Sum { x },
        )
    }

    // ---- convolution ----

    /// Cross-correlation with zero padding. `pad: None` selects "same"
    /// padding (odd kernel extents required); `Some((ph, pw))` overrides.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        kernels: NodeId,
        bias: NodeId,
        pad: Option<(usize, usize)>,
    ) -> Result<NodeId> {
        let (n, ci, h, w) = self.value(x).dims4()?;
        let (co, kci, kh, kw) = self.value(kernels).dims4()?;
        if ci != kci {
            return Err(Error::shape(format!(
                "conv2d: input has {ci} channels but kernels expect {kci}"
            )));
        }
        if self.value(bias).shape() != [co] {
            return Err(Error::shape(format!(
                "conv2d: bias shape {:?} does not match {co} output channels",
                self.value(bias).shape()
            )));
        }
        let (pad_h, pad_w) = match pad {
            Some(p) => p,
            None => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::shape(format!(
                        "conv2d: same padding requires odd kernel extents, got {kh}x{kw}"
                    )));
                }
                ((kh - 1) / 2, (kw - 1) / 2)
            }
        };
        if kh > h + 2 * pad_h || kw > w + 2 * pad_w {
            return Err(Error::shape(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad_h,
                w + 2 * pad_w
            )));
        }
        let dims = ConvDims {
            n,
            ci,
            h,
            w,
            co,
            kh,
            kw,
            pad_h,
            pad_w,
        };
        let out = conv2d_forward(
            self.value(x).data(),
            self.value(kernels).data(),
            self.value(bias).data(),
            &dims,
        );
        let value = Tensor::new(vec![n, co, dims.out_h(), dims.out_w()], out)?;
        let needs = self.needs(&[x, kernels, bias]);
        Ok(self.push(
            value,
            false,
            needs,
            Record::Conv2d {
                x,
                kernels,
                bias,
                dims,
            },
        ))
    }

    // ---- pooling and dyads ----

    pub fn avg_pool_to_column(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let out = pool::pool_to_column_forward(self.value(x).data(), n, c, h, w);
        let value = Tensor::new(vec![n, c, h, 1], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, false, needs, Record::PoolToColumn { x }))
    }

    pub fn avg_pool_to_row(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let out = pool::pool_to_row_forward(self.value(x).data(), n, c, h, w);
        let value = Tensor::new(vec![n, c, 1, w], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, false, needs, Record::PoolToRow { x }))
    }

    /// `col [n,c,h,1]` x `row [n,c,1,w]` -> `[n,c,h,w]`.
    pub fn outer_product(&mut self, col: NodeId, row: NodeId) -> Result<NodeId> {
        let (cn, cc, h, c1) = self.value(col).dims4()?;
        let (rn, rc, r1, w) = self.value(row).dims4()?;
        if c1 != 1 || r1 != 1 {
            return Err(Error::shape(format!(
                "outer_product: expected [n,c,h,1] and [n,c,1,w], got {:?} and {:?}",
                self.value(col).shape(),
                self.value(row).shape()
            )));
        }
        if cn != rn || cc != rc {
            return Err(Error::shape(format!(
                "outer_product: batch/channel mismatch {:?} vs {:?}",
                self.value(col).shape(),
                self.value(row).shape()
            )));
        }
        let out = pool::outer_forward(self.value(col).data(), self.value(row).data(), cn, cc, h, w);
        let value = Tensor::new(vec![cn, cc, h, w], out)?;
        let needs = self.needs(&[col, row]);
        Ok(self.push(value, false, needs, Record::Outer { col, row }))
    }

    // ---- pixel shuffle ----

    pub fn pixel_shuffle(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if r == 0 || c % (r * r) != 0 {
            return Err(Error::shape(format!(
                "pixel_shuffle: {c} channels not divisible by r*r = {}",
                r * r
            )));
        }
        let c_out = c / (r * r);
        let out = shuffle::shuffle_forward(self.value(x).data(), n, c_out, h, w, r);
        let value = Tensor::new(vec![n, c_out, h * r, w * r], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, false, needs, Record::PixelShuffle { x, r }))
    }

    pub fn pixel_unshuffle(&mut self, x: NodeId, r: usize) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(Error::shape(format!(
                "pixel_unshuffle: spatial dims {h}x{w} not divisible by {r}"
            )));
        }
        let out = shuffle::unshuffle_forward(self.value(x).data(), n, c, h, w, r);
        let value = Tensor::new(vec![n, c * r * r, h / r, w / r], out)?;
        let needs = self.needs(&[x]);
        Ok(self.push(value, false, needs, Record::PixelUnshuffle { x, r }))
    }

    // ---- batch norm ----

    /// Running statistics live outside the tape and are updated in place in
    /// train mode.
    pub fn batch_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        stats: &mut BnStats<S>,
        mode: BnMode,
    ) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if self.value(gamma).shape() != [c] || self.value(beta).shape() != [c] {
            return Err(Error::shape(format!(
                "batch_norm: gamma/beta must have shape [{c}]"
            )));
        }
        if stats.mean.len() != c {
            return Err(Error::shape(format!(
                "batch_norm: running stats cover {} channels, input has {c}",
                stats.mean.len()
            )));
        }
        if mode == BnMode::Train && n * h * w < 2 {
            return Err(Error::contract(
                "batch_norm: train mode needs at least 2 values per channel".to_string(),
            ));
        }
        let (out, cache) = bn_forward(
            self.value(x).data(),
            n,
            c,
            h,
            w,
            self.value(gamma).data(),
            self.value(beta).data(),
            stats,
            mode,
        );
        let value = Tensor::new(vec![n, c, h, w], out)?;
        let needs = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            value,
            false,
            needs,
            Record::BatchNorm {
                x,
                gamma,
                beta,
                cache,
            },
        ))
    }

    // ---- concatenation ----

    pub fn concat_channels(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::argument("concat_channels: empty part list"));
        }
        let (n, _, h, w) = self.value(parts[0]).dims4()?;
        let mut c_total = 0;
        for &p in parts {
            let (pn, pc, ph, pw) = self.value(p).dims4()?;
            if pn != n || ph != h || pw != w {
                return Err(Error::shape(format!(
                    "concat_channels: incompatible shapes {:?} vs {:?}",
                    self.value(parts[0]).shape(),
                    self.value(p).shape()
                )));
            }
            c_total += pc;
        }
        let mut data = vec![S::ZERO; n * c_total * h * w];
        for b in 0..n {
            let mut offset = 0;
            for &p in parts {
                let pc = self.value(p).shape()[1];
                let src = self.value(p).data();
                let len = pc * h * w;
                let dst_base = (b * c_total + offset) * h * w;
                data[dst_base..dst_base + len].copy_from_slice(&src[b * len..(b + 1) * len]);
                offset += pc;
            }
        }
        let value = Tensor::new(vec![n, c_total, h, w], data)?;
        let needs = self.needs(parts);
        Ok(self.push(
            value,
            false,
            needs,
            Record::ConcatChannels {
                parts: parts.to_vec(),
            },
        ))
    }

    // ---- losses ----

    /// Mean of elementwise `|a-b|^alpha`, as a `[1]` tensor. Means rather
    /// than sums keep loss weights independent of patch size.
    pub fn loss_norm(&mut self, a: NodeId, b: NodeId, alpha: LossAlpha) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "loss_norm")?;
        let numel = self.value(a).numel();
        let mut acc = 0.0f64;
        for (&x, &y) in self.value(a).data().iter().zip(self.value(b).data()) {
            let d = (x - y).to_f64();
            acc += match alpha {
                LossAlpha::L1 => d.abs(),
                LossAlpha::L2 => d * d,
            };
        }
        let value = Tensor::scalar(S::from_f64(acc / numel as f64));
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, false, needs, Record::LossNorm { a, b, alpha }))
    }

    /// Mean absolute difference of horizontal plus vertical first-difference
    /// maps; the weight-free stand-in for a learned perceptual term.
    pub fn diff_map_l1(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        same_shape(self.value(a), self.value(b), "diff_map_l1")?;
        let (n, c, h, w) = self.value(a).dims4()?;
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let mut acc = 0.0f64;
        let mut count = 0usize;
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..h {
                for x in 0..w.saturating_sub(1) {
                    let i = base + y * w + x;
                    let da = (va[i + 1] - va[i]).to_f64();
                    let db = (vb[i + 1] - vb[i]).to_f64();
                    acc += (da - db).abs();
                    count += 1;
                }
            }
            for y in 0..h.saturating_sub(1) {
                for x in 0..w {
                    let i = base + y * w + x;
                    let da = (va[i + w] - va[i]).to_f64();
                    let db = (vb[i + w] - vb[i]).to_f64();
                    acc += (da - db).abs();
                    count += 1;
                }
            }
        }
        let mean = if count == 0 { 0.0 } else { acc / count as f64 };
        let value = Tensor::scalar(S::from_f64(mean));
        let needs = self.needs(&[a, b]);
        Ok(self.push(value, false, needs, Record::DiffMapL1 { a, b }))
    }

    // ---- backward ----

    /// Populate gradients of everything reachable from the scalar `loss`.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients<S>> {
        if self.consumed {
            return Err(Error::contract(
                "backward already ran on this tape; record a fresh tape first",
            ));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward expects a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(vec![S::ONE]);
        }

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], id: NodeId, contrib: Vec<S>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    fn propagate(&self, id: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        match &self.nodes[id].record {
            Record::Leaf => {}
            Record::Relu { x } => {
                let contrib = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > S::ZERO { gi } else { S::ZERO })
                    .collect();
                self.accumulate(grads, *x, contrib);
            }
            Record::Add { a, b } => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Record::Sub { a, b } => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|&v| -v).collect());
            }
            Record::ScalarMul { x, factor } => {
                let f = *factor;
                self.accumulate(grads, *x, g.iter().map(|&v| v * f).collect());
            }
            Record::Sum { x } => {
                let gv = g[0];
                self.accumulate(grads, *x, vec![gv; self.value(*x).numel()]);
            }
            Record::Conv2d {
                x,
                kernels,
                bias,
                dims,
            } => {
                let (gi, gk, gb) =
                    conv2d_backward(self.value(*x).data(), self.value(*kernels).data(), dims, g);
                self.accumulate(grads, *x, gi);
                self.accumulate(grads, *kernels, gk);
                self.accumulate(grads, *bias, gb);
            }
            Record::PoolToColumn { x } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("recorded rank-4");
                self.accumulate(grads, *x, pool::pool_to_column_backward(g, n, c, h, w));
            }
            Record::PoolToRow { x } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("recorded rank-4");
                self.accumulate(grads, *x, pool::pool_to_row_backward(g, n, c, h, w));
            }
            Record::Outer { col, row } => {
                let (n, c, h, _) = self.value(*col).dims4().expect("recorded rank-4");
                let w = self.value(*row).shape()[3];
                let (gc, gr) = pool::outer_backward(
                    self.value(*col).data(),
                    self.value(*row).data(),
                    g,
                    n,
                    c,
                    h,
                    w,
                );
                self.accumulate(grads, *col, gc);
                self.accumulate(grads, *row, gr);
            }
            Record::PixelShuffle { x, r } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("recorded rank-4");
                let c_out = c / (r * r);
                let contrib = shuffle::unshuffle_forward(g, n, c_out, h * r, w * r, *r);
                self.accumulate(grads, *x, contrib);
            }
            Record::PixelUnshuffle { x, r } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("recorded rank-4");
                let contrib = shuffle::shuffle_forward(g, n, c, h / r, w / r, *r);
                self.accumulate(grads, *x, contrib);
            }
            Record::BatchNorm {
                x,
                gamma,
                beta,
                cache,
            } => {
                let (n, c, h, w) = self.value(*x).dims4().expect("recorded rank-4");
                let (gi, gg, gb) = bn_backward(cache, n, c, h, w, self.value(*gamma).data(), g);
                self.accumulate(grads, *x, gi);
                self.accumulate(grads, *gamma, gg);
                self.accumulate(grads, *beta, gb);
            }
            Record::ConcatChannels { parts } => {
                let (n, c_total, h, w) = self.nodes[id].value.dims4().expect("recorded rank-4");
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).shape()[1];
                    let mut contrib = vec![S::ZERO; n * pc * h * w];
                    for b in 0..n {
                        let src_base = (b * c_total + offset) * h * w;
                        let len = pc * h * w;
                        contrib[b * len..(b + 1) * len]
                            .copy_from_slice(&g[src_base..src_base + len]);
                    }
                    self.accumulate(grads, p, contrib);
                    offset += pc;
                }
            }
            Record::LossNorm { a, b, alpha } => {
                let numel = self.value(*a).numel();
                let scale = g[0] / S::from_f64(numel as f64);
                let mut ga = Vec::with_capacity(numel);
                for (&x, &y) in self.value(*a).data().iter().zip(self.value(*b).data()) {
                    let d = x - y;
                    let v = match alpha {
                        LossAlpha::L2 => scale * (d + d),
                        LossAlpha::L1 => {
                            if d > S::ZERO {
                                scale
                            } else if d < S::ZERO {
                                -scale
                            } else {
                                S::ZERO
                            }
                        }
                    };
                    ga.push(v);
                }
                let gb = ga.iter().map(|&v| -v).collect();
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Record::DiffMapL1 { a, b } => {
                let (n, c, h, w) = self.value(*a).dims4().expect("recorded rank-4");
                let count_h = n * c * h * w.saturating_sub(1);
                let count_v = n * c * h.saturating_sub(1) * w;
                let count = count_h + count_v;
                if count == 0 {
                    return;
                }
                let scale = g[0] / S::from_f64(count as f64);
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let mut ga = vec![S::ZERO; va.len()];
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for y in 0..h {
                        for x in 0..w.saturating_sub(1) {
                            let i = base + y * w + x;
                            let d = (va[i + 1] - va[i]) - (vb[i + 1] - vb[i]);
                            let s = if d > S::ZERO {
                                scale
                            } else if d < S::ZERO {
                                -scale
                            } else {
                                S::ZERO
                            };
                            ga[i + 1] += s;
                            ga[i] -= s;
                        }
                    }
                    for y in 0..h.saturating_sub(1) {
                        for x in 0..w {
                            let i = base + y * w + x;
                            let d = (va[i + w] - va[i]) - (vb[i + w] - vb[i]);
                            let s = if d > S::ZERO {
                                scale
                            } else if d < S::ZERO {
                                -scale
                            } else {
                                S::ZERO
                            };
                            ga[i + w] += s;
                            ga[i] -= s;
                        }
                    }
                }
                let gb = ga.iter().map(|&v| -v).collect();
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
        }
    }
}

//! Tape-based reverse-mode differentiation over NCHW tensors.
//!
//! Every op appends a node; [`Graph::backward`] walks the tape in reverse.
//! Nodes whose inputs are all non-trainable leaves carry no gradient.

use crate::error::{Error, Result};

use super::tensor::{gemm, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        pad: usize,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    GroupNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Silu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    AddChannel {
        x: NodeId,
        v: NodeId,
    },
    AvgPool2 {
        x: NodeId,
    },
    Upsample2 {
        x: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    SquaredError {
        x: NodeId,
        target: Vec<T>,
    },
    Sum {
        x: NodeId,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dims4(shape: &[usize]) -> (usize, usize, usize, usize) {
    assert_eq!(shape.len(), 4, "expected an NCHW tensor, got shape {shape:?}");
    (shape[0], shape[1], shape[2], shape[3])
}

/// Unfolds one `C×H×W` image into a `(C·k·k)×(H·W)` patch matrix.
fn im2col<T: Scalar>(x: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, col: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    let dst = &mut col[row + y * w..row + (y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x_out, d) in dst.iter_mut().enumerate() {
                        let sx = x_out as isize + kx as isize - pad as isize;
                        *d = if sx < 0 || sx >= w as isize {
                            T::ZERO
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im<T: Scalar>(col: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ci * k + ky) * k + kx) * hw;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let base = ci * hw + sy as usize * w;
                    for x_out in 0..w {
                        let sx = x_out as isize + kx as isize - pad as isize;
                        if sx >= 0 && sx < w as isize {
                            dx[base + sx as usize] += col[row + y * w + x_out];
                        }
                    }
                }
            }
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds a leaf; `requires_grad = false` makes it a detached constant.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].value.grad()
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<T>> {
        self.nodes[id.0].value.take_grad()
    }

    /// Same-padded stride-1 convolution; `w` is `[Cout, Cin, k, k]`, `k` odd.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let (bsz, cin, h, wd) = dims4(self.shape(x));
        let ws = self.shape(w).to_vec();
        assert_eq!(ws.len(), 4);
        let (cout, k) = (ws[0], ws[2]);
        assert_eq!(ws[1], cin, "conv input channels");
        assert_eq!(ws[3], k);
        assert_eq!(self.shape(b), [cout]);
        let pad = k / 2;
        let hw = h * wd;
        let ckk = cin * k * k;
        let mut out = vec![T::ZERO; bsz * cout * hw];
        {
            let xv = self.value(x).values();
            let wv = self.value(w).values();
            let bv = self.value(b).values();
            let mut col = if k == 1 { Vec::new() } else { vec![T::ZERO; ckk * hw] };
            for bi in 0..bsz {
                let xs = &xv[bi * cin * hw..(bi + 1) * cin * hw];
                let os = &mut out[bi * cout * hw..(bi + 1) * cout * hw];
                for (co, chunk) in os.chunks_mut(hw).enumerate() {
                    chunk.fill(bv[co]);
                }
                let src: &[T] = if k == 1 {
                    xs
                } else {
                    im2col(xs, cin, h, wd, k, pad, &mut col);
                    &col
                };
                gemm(wv, false, src, false, cout, ckk, hw, T::ONE, os);
            }
        }
        self.push(
            Tensor::new(vec![bsz, cout, h, wd], out),
            Op::Conv2d { x, w, b, pad },
            &[x, w, b],
        )
    }

    /// `x·Wᵀ + b` with `x: [B, in]`, `W: [out, in]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert_eq!(xs.len(), 2);
        let (bsz, din) = (xs[0], xs[1]);
        let dout = ws[0];
        assert_eq!(ws[1], din, "linear input width");
        let mut out = Vec::with_capacity(bsz * dout);
        for _ in 0..bsz {
            out.extend_from_slice(self.value(b).values());
        }
        gemm(
            self.value(x).values(),
            false,
            self.value(w).values(),
            true,
            bsz,
            din,
            dout,
            T::ONE,
            &mut out,
        );
        self.push(Tensor::new(vec![bsz, dout], out), Op::Linear { x, w, b }, &[x, w, b])
    }

    pub fn group_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, groups: usize) -> NodeId {
        let (bsz, c, h, w) = dims4(self.shape(x));
        assert!(c % groups == 0, "{c} channels not divisible into {groups} groups");
        let cg = c / groups;
        let span = cg * h * w;
        let hw = h * w;
        let eps = T::from_f64(GROUP_NORM_EPS);
        let count = T::from_f64(span as f64);
        let xv = self.value(x).values();
        let gv = self.value(gamma).values();
        let bv = self.value(beta).values();
        let mut out = vec![T::ZERO; xv.len()];
        let mut means = Vec::with_capacity(bsz * groups);
        let mut rstds = Vec::with_capacity(bsz * groups);
        for bi in 0..bsz {
            for g in 0..groups {
                let off = (bi * c + g * cg) * hw;
                let seg = &xv[off..off + span];
                let mut mean = T::ZERO;
                for &v in seg {
                    mean += v;
                }
                mean = mean / count;
                let mut var = T::ZERO;
                for &v in seg {
                    let d = v - mean;
                    var += d * d;
                }
                var = var / count;
                let rstd = T::ONE / (var + eps).sqrt();
                for ci in 0..cg {
                    let ch = g * cg + ci;
                    for i in 0..hw {
                        let j = off + ci * hw + i;
                        out[j] = gv[ch] * (xv[j] - mean) * rstd + bv[ch];
                    }
                }
                means.push(mean);
                rstds.push(rstd);
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(
            Tensor::new(shape, out),
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean: means,
                rstd: rstds,
            },
            &[x, gamma, beta],
        )
    }

    pub fn silu(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let out: Vec<T> = xv.values().iter().map(|&v| v * sigmoid(v)).collect();
        let shape = xv.shape().to_vec();
        self.push(Tensor::new(shape, out), Op::Silu { x }, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let out: Vec<T> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&p, &q)| p + q)
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(Tensor::new(shape, out), Op::Add { a, b }, &[a, b])
    }

    /// Broadcast-adds `v: [B, C]` over the spatial dims of `x: [B, C, H, W]`.
    pub fn add_channel(&mut self, x: NodeId, v: NodeId) -> NodeId {
        let (bsz, c, h, w) = dims4(self.shape(x));
        assert_eq!(self.shape(v), [bsz, c], "channel bias shape");
        let hw = h * w;
        let vv = self.value(v).values();
        let mut out = self.value(x).values().to_vec();
        for (i, chunk) in out.chunks_mut(hw).enumerate() {
            let add = vv[i];
            chunk.iter_mut().for_each(|o| *o += add);
        }
        let shape = self.shape(x).to_vec();
        self.push(Tensor::new(shape, out), Op::AddChannel { x, v }, &[x, v])
    }

    /// 2×2 average pooling; spatial dims must be even.
    pub fn avg_pool2(&mut self, x: NodeId) -> NodeId {
        let (bsz, c, h, w) = dims4(self.shape(x));
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims, got {h}x{w}");
        let (oh, ow) = (h / 2, w / 2);
        let xv = self.value(x).values();
        let quarter = T::from_f64(0.25);
        let mut out = vec![T::ZERO; bsz * c * oh * ow];
        for p in 0..bsz * c {
            let src = &xv[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xo in 0..ow {
                    let i = 2 * y * w + 2 * xo;
                    dst[y * ow + xo] = (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter;
                }
            }
        }
        self.push(Tensor::new(vec![bsz, c, oh, ow], out), Op::AvgPool2 { x }, &[x])
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let (bsz, c, h, w) = dims4(self.shape(x));
        let (oh, ow) = (2 * h, 2 * w);
        let xv = self.value(x).values();
        let mut out = vec![T::ZERO; bsz * c * oh * ow];
        for p in 0..bsz * c {
            let src = &xv[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for y in 0..oh {
                for xo in 0..ow {
                    dst[y * ow + xo] = src[(y / 2) * w + xo / 2];
                }
            }
        }
        self.push(Tensor::new(vec![bsz, c, oh, ow], out), Op::Upsample2 { x }, &[x])
    }

    /// Channel concatenation `[a | b]`.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (bsz, ca, h, w) = dims4(self.shape(a));
        let (bb, cb, hb, wb) = dims4(self.shape(b));
        assert_eq!((bsz, h, w), (bb, hb, wb), "concat spatial mismatch");
        let hw = h * w;
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = Vec::with_capacity(bsz * (ca + cb) * hw);
        for bi in 0..bsz {
            out.extend_from_slice(&av[bi * ca * hw..(bi + 1) * ca * hw]);
            out.extend_from_slice(&bv[bi * cb * hw..(bi + 1) * cb * hw]);
        }
        self.push(Tensor::new(vec![bsz, ca + cb, h, w], out), Op::Concat { a, b }, &[a, b])
    }

    /// `(1/B)·Σ_b ‖x_b − target_b‖²`, a scalar; `B` is the leading dim.
    pub fn squared_error(&mut self, x: NodeId, target: Vec<T>) -> NodeId {
        let xv = self.value(x);
        assert_eq!(xv.len(), target.len(), "target must be co-shaped");
        let bsz = xv.shape()[0].max(1);
        let mut acc = 0.0f64;
        for (&p, &q) in xv.values().iter().zip(&target) {
            let d = (p - q).to_f64();
            acc += d * d;
        }
        let loss = T::from_f64(acc / bsz as f64);
        self.push(Tensor::new(vec![1], vec![loss]), Op::SquaredError { x, target }, &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).values().iter().fold(0.0f64, |acc, v| acc + v.to_f64());
        self.push(Tensor::new(vec![1], vec![T::from_f64(s)]), Op::Sum { x }, &[x])
    }

    /// Backpropagates from a scalar node. Gradients land on the trainable
    /// leaves; read them with [`Graph::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_with_seed(loss, vec![T::ONE])
    }

    /// Backpropagates an arbitrary co-shaped seed from `root`.
    pub fn backward_with_seed(&mut self, root: NodeId, seed: Vec<T>) -> Result<()> {
        if seed.len() != self.value(root).len() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(root).to_vec(),
                found: vec![seed.len()],
            });
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &dy, &mut grads);
            if matches!(self.nodes[i].op, Op::Leaf) {
                self.nodes[i].value.set_grad(dy);
            }
        }
        Ok(())
    }

    fn accumulate<'g>(&self, grads: &'g mut [Option<Vec<T>>], id: NodeId) -> Option<&'g mut Vec<T>> {
        if !self.nodes[id.0].requires_grad {
            return None;
        }
        let n = self.nodes[id.0].value.len();
        Some(grads[id.0].get_or_insert_with(|| vec![T::ZERO; n]))
    }

    fn propagate(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, pad } => {
                let (bsz, cin, h, wd) = dims4(self.shape(*x));
                let ws = self.shape(*w);
                let (cout, k) = (ws[0], ws[2]);
                let hw = h * wd;
                let ckk = cin * k * k;
                let xv = self.value(*x).values();
                let wv = self.value(*w).values();
                if let Some(db) = self.accumulate(grads, *b) {
                    for bi in 0..bsz {
                        for co in 0..cout {
                            let s = &dy[(bi * cout + co) * hw..(bi * cout + co + 1) * hw];
                            let mut acc = T::ZERO;
                            for &v in s {
                                acc += v;
                            }
                            db[co] += acc;
                        }
                    }
                }
                let need_w = self.nodes[w.0].requires_grad;
                let need_x = self.nodes[x.0].requires_grad;
                let mut col = if k == 1 { Vec::new() } else { vec![T::ZERO; ckk * hw] };
                let mut dcol = if need_x && k != 1 {
                    vec![T::ZERO; ckk * hw]
                } else {
                    Vec::new()
                };
                let mut dw_acc = if need_w { vec![T::ZERO; cout * ckk] } else { Vec::new() };
                let mut dx_acc = if need_x { vec![T::ZERO; xv.len()] } else { Vec::new() };
                for bi in 0..bsz {
                    let xs = &xv[bi * cin * hw..(bi + 1) * cin * hw];
                    let dys = &dy[bi * cout * hw..(bi + 1) * cout * hw];
                    if need_w {
                        let src: &[T] = if k == 1 {
                            xs
                        } else {
                            im2col(xs, cin, h, wd, k, *pad, &mut col);
                            &col
                        };
                        // dW += dY · colᵀ
                        gemm(dys, false, src, true, cout, hw, ckk, T::ONE, &mut dw_acc);
                    }
                    if need_x {
                        let dxs = &mut dx_acc[bi * cin * hw..(bi + 1) * cin * hw];
                        if k == 1 {
                            gemm(wv, true, dys, false, ckk, cout, hw, T::ONE, dxs);
                        } else {
                            gemm(wv, true, dys, false, ckk, cout, hw, T::ZERO, &mut dcol);
                            col2im(&dcol, cin, h, wd, k, *pad, dxs);
                        }
                    }
                }
                if let Some(dw) = self.accumulate(grads, *w) {
                    add_into(dw, &dw_acc);
                }
                if let Some(dx) = self.accumulate(grads, *x) {
                    add_into(dx, &dx_acc);
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (bsz, din) = (xs[0], xs[1]);
                let dout = self.shape(*w)[0];
                if let Some(db) = self.accumulate(grads, *b) {
                    for row in dy.chunks(dout) {
                        add_into(db, row);
                    }
                }
                if let Some(dw) = self.accumulate(grads, *w) {
                    // dW += dYᵀ · X
                    gemm(dy, true, self.value(*x).values(), false, dout, bsz, din, T::ONE, dw);
                }
                if let Some(dx) = self.accumulate(grads, *x) {
                    gemm(dy, false, self.value(*w).values(), false, bsz, dout, din, T::ONE, dx);
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                mean,
                rstd,
            } => {
                let (bsz, c, h, w) = dims4(self.shape(*x));
                let cg = c / groups;
                let hw = h * w;
                let count = T::from_f64((cg * hw) as f64);
                let xv = self.value(*x).values();
                let gv = self.value(*gamma).values();
                let mut dgamma = vec![T::ZERO; c];
                let mut dbeta = vec![T::ZERO; c];
                let need_x = self.nodes[x.0].requires_grad;
                let mut dx_acc = if need_x { vec![T::ZERO; xv.len()] } else { Vec::new() };
                for bi in 0..bsz {
                    for g in 0..*groups {
                        let gi = bi * groups + g;
                        let (mu, rs) = (mean[gi], rstd[gi]);
                        let off = (bi * c + g * cg) * hw;
                        let mut sum_dxhat = T::ZERO;
                        let mut sum_dxhat_xhat = T::ZERO;
                        for ci in 0..cg {
                            let ch = g * cg + ci;
                            for j in off + ci * hw..off + (ci + 1) * hw {
                                let xhat = (xv[j] - mu) * rs;
                                dgamma[ch] += dy[j] * xhat;
                                dbeta[ch] += dy[j];
                                let dxhat = dy[j] * gv[ch];
                                sum_dxhat += dxhat;
                                sum_dxhat_xhat += dxhat * xhat;
                            }
                        }
                        if need_x {
                            for ci in 0..cg {
                                let ch = g * cg + ci;
                                for j in off + ci * hw..off + (ci + 1) * hw {
                                    let xhat = (xv[j] - mu) * rs;
                                    let dxhat = dy[j] * gv[ch];
                                    dx_acc[j] = rs / count * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                                }
                            }
                        }
                    }
                }
                if let Some(dg) = self.accumulate(grads, *gamma) {
                    add_into(dg, &dgamma);
                }
                if let Some(db) = self.accumulate(grads, *beta) {
                    add_into(db, &dbeta);
                }
                if let Some(dx) = self.accumulate(grads, *x) {
                    add_into(dx, &dx_acc);
                }
            }
            Op::Silu { x } => {
                let xv = self.value(*x).values();
                if let Some(dx) = self.accumulate(grads, *x) {
                    for ((d, &v), &g) in dx.iter_mut().zip(xv).zip(dy) {
                        let s = sigmoid(v);
                        *d += g * s * (T::ONE + v * (T::ONE - s));
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(da) = self.accumulate(grads, *a) {
                    add_into(da, dy);
                }
                if let Some(db) = self.accumulate(grads, *b) {
                    add_into(db, dy);
                }
            }
            Op::AddChannel { x, v } => {
                let (_, _, h, w) = dims4(self.shape(*x));
                if let Some(dx) = self.accumulate(grads, *x) {
                    add_into(dx, dy);
                }
                if let Some(dv) = self.accumulate(grads, *v) {
                    for (d, chunk) in dv.iter_mut().zip(dy.chunks(h * w)) {
                        for &g in chunk {
                            *d += g;
                        }
                    }
                }
            }
            Op::AvgPool2 { x } => {
                let (bsz, c, h, w) = dims4(self.shape(*x));
                let (oh, ow) = (h / 2, w / 2);
                let quarter = T::from_f64(0.25);
                if let Some(dx) = self.accumulate(grads, *x) {
                    for p in 0..bsz * c {
                        for y in 0..oh {
                            for xo in 0..ow {
                                let g = dy[p * oh * ow + y * ow + xo] * quarter;
                                let i = p * h * w + 2 * y * w + 2 * xo;
                                dx[i] += g;
                                dx[i + 1] += g;
                                dx[i + w] += g;
                                dx[i + w + 1] += g;
                            }
                        }
                    }
                }
            }
            Op::Upsample2 { x } => {
                let (bsz, c, h, w) = dims4(self.shape(*x));
                let (oh, ow) = (2 * h, 2 * w);
                if let Some(dx) = self.accumulate(grads, *x) {
                    for p in 0..bsz * c {
                        for y in 0..oh {
                            for xo in 0..ow {
                                dx[p * h * w + (y / 2) * w + xo / 2] += dy[p * oh * ow + y * ow + xo];
                            }
                        }
                    }
                }
            }
            Op::Concat { a, b } => {
                let (bsz, ca, h, w) = dims4(self.shape(*a));
                let cb = self.shape(*b)[1];
                let hw = h * w;
                let stride = (ca + cb) * hw;
                if let Some(da) = self.accumulate(grads, *a) {
                    for bi in 0..bsz {
                        add_into(
                            &mut da[bi * ca * hw..(bi + 1) * ca * hw],
                            &dy[bi * stride..bi * stride + ca * hw],
                        );
                    }
                }
                if let Some(db) = self.accumulate(grads, *b) {
                    for bi in 0..bsz {
                        add_into(
                            &mut db[bi * cb * hw..(bi + 1) * cb * hw],
                            &dy[bi * stride + ca * hw..(bi + 1) * stride],
                        );
                    }
                }
            }
            Op::SquaredError { x, target } => {
                let bsz = self.shape(*x)[0].max(1);
                let scale = dy[0] * T::from_f64(2.0 / bsz as f64);
                let xv = self.value(*x).values();
                if let Some(dx) = self.accumulate(grads, *x) {
                    for ((d, &p), &q) in dx.iter_mut().zip(xv).zip(target) {
                        *d += scale * (p - q);
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(dx) = self.accumulate(grads, *x) {
                    dx.iter_mut().for_each(|d| *d += dy[0]);
                }
            }
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

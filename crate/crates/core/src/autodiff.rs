//! A small reverse-mode tape covering the ops the generators, discriminators
//! and classifiers need. Each forward pass records onto a fresh [`Graph`];
//! [`Graph::backward`] returns gradients for every node that depends on a
//! parameter leaf.

use crate::tensor::{gemm, Layout, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    Upsample2 {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Tanh {
        x: Var,
    },
    Atanh {
        x: Var,
    },
    Affine {
        x: Var,
        scale: f64,
    },
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        x: Var,
    },
    Flatten {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    SquaredErrorToConst {
        x: Var,
        target: f64,
    },
    L1Mean {
        a: Var,
        b: Var,
    },
    BceWithLogits {
        z: Var,
        targets: Vec<f64>,
    },
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for later differentiation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Output of [`Graph::backward`]: one optional gradient per node.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of `v`, or zeros shaped like `like` when the loss does not depend on it.
    pub fn take_or_zeros(&mut self, v: Var, like: &[usize]) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(like))
    }
}

fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Output positions `[lo, hi)` along one axis whose input index
/// `o·stride + k − pad` falls inside `[0, size)`.
fn valid_range(size: usize, out: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let (size, k, stride, pad) = (size as isize, k as isize, stride as isize, pad as isize);
    let lo = if pad > k { (pad - k + stride - 1) / stride } else { 0 };
    let last = size - 1 + pad - k;
    let hi = if last < 0 { 0 } else { (last / stride + 1).min(out as isize) };
    (lo as usize, (hi as usize).max(lo as usize))
}

/// Unfolds one image `[c,h,w]` into `[c*k*k, ho*wo]` patch columns.
/// Every entry of `cols` is written.
#[allow(clippy::too_many_arguments)]
fn im2col(
    img: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut [f64],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let p = ho * wo;
    for ci in 0..c {
        let plane = &img[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            let (ylo, yhi) = valid_range(h, ho, ky, stride, pad);
            for kx in 0..k {
                let (xlo, xhi) = valid_range(w, wo, kx, stride, pad);
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                dst[..ylo * wo].fill(0.0);
                dst[yhi * wo..].fill(0.0);
                for oy in ylo..yhi {
                    let iy = oy * stride + ky - pad;
                    let src = &plane[iy * w..(iy + 1) * w];
                    let out_row = &mut dst[oy * wo..(oy + 1) * wo];
                    out_row[..xlo].fill(0.0);
                    out_row[xhi..].fill(0.0);
                    if xhi > xlo {
                        let x0 = xlo * stride + kx - pad;
                        if stride == 1 {
                            out_row[xlo..xhi].copy_from_slice(&src[x0..x0 + xhi - xlo]);
                        } else {
                            for (o, ix) in out_row[xlo..xhi].iter_mut().zip((x0..).step_by(stride)) {
                                *o = src[ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch columns back into an image.
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    img: &mut [f64],
) {
    let ho = conv_out(h, k, stride, pad);
    let wo = conv_out(w, k, stride, pad);
    let p = ho * wo;
    for ci in 0..c {
        let plane = &mut img[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            let (ylo, yhi) = valid_range(h, ho, ky, stride, pad);
            for kx in 0..k {
                let (xlo, xhi) = valid_range(w, wo, kx, stride, pad);
                if xhi <= xlo {
                    continue;
                }
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * p..(row + 1) * p];
                let x0 = xlo * stride + kx - pad;
                for oy in ylo..yhi {
                    let iy = oy * stride + ky - pad;
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    let srow = &src[oy * wo + xlo..oy * wo + xhi];
                    if stride == 1 {
                        dst[x0..x0 + srow.len()].iter_mut().zip(srow).for_each(|(d, s)| *d += s);
                    } else {
                        for (s, ix) in srow.iter().zip((x0..).step_by(stride)) {
                            dst[ix] += s;
                        }
                    }
                }
            }
        }
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<(Vec<f64>, Vec<f64>)> = const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
}

/// Runs `f` with two reusable per-thread buffers of at least `len` elements.
/// Contents are unspecified on entry.
fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f64], &mut [f64]) -> R) -> R {
    SCRATCH.with(|cell| {
        let mut bufs = cell.borrow_mut();
        let (a, b) = &mut *bufs;
        if a.len() < len {
            a.resize(len, 0.0);
            b.resize(len, 0.0);
        }
        f(&mut a[..len], &mut b[..len])
    })
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], f: impl FnOnce(&mut [f64])) {
    let t = slot.get_or_insert_with(|| Tensor::zeros(shape));
    f(t.data_mut());
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf; its gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient (input images, detached fakes).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[x.0].value;
        let data = src.data().iter().map(|&v| f(v)).collect();
        let t = Tensor::from_vec(src.shape(), data);
        let ng = self.needs(x);
        self.push(t, op, ng)
    }

    /// 2-D convolution with square kernel `w: [co, ci, k, k]` and zero padding.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let (n, c, h, wd) = self.value(x).dims4();
        let wt = self.value(w);
        let (co, ci, k, k2) = wt.dims4();
        assert_eq!(ci, c, "conv2d: input channels {c} vs kernel {ci}");
        assert_eq!(k, k2, "conv2d: square kernels only");
        assert_eq!(self.value(b).len(), co);
        assert!(h + 2 * pad >= k && wd + 2 * pad >= k, "conv2d: kernel larger than input");
        let ho = conv_out(h, k, stride, pad);
        let wo = conv_out(wd, k, stride, pad);
        let kk = c * k * k;
        let p = ho * wo;
        let mut out = Tensor::zeros(&[n, co, ho, wo]);
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let bv = self.value(b).data();
            let od = out.data_mut();
            with_scratch(kk * p, |cols, _| {
                for i in 0..n {
                    im2col(&xv[i * c * h * wd..(i + 1) * c * h * wd], c, h, wd, k, stride, pad, cols);
                    let dst = &mut od[i * co * p..(i + 1) * co * p];
                    for (oc, chunk) in dst.chunks_mut(p).enumerate() {
                        chunk.fill(bv[oc]);
                    }
                    gemm(co, kk, p, wv, Layout::row_major(kk), cols, Layout::row_major(p), 1.0, dst);
                }
            });
        }
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
            ng,
        )
    }

    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        {
            let src = self.value(x).data();
            let dst = out.data_mut();
            for plane in 0..n * c {
                let s = &src[plane * h * w..(plane + 1) * h * w];
                let d = &mut dst[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                for y in 0..2 * h {
                    for xx in 0..2 * w {
                        d[y * 2 * w + xx] = s[(y / 2) * w + xx / 2];
                    }
                }
            }
        }
        let ng = self.needs(x);
        self.push(out, Op::Upsample2 { x }, ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "add: shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::from_vec(av.shape(), data);
        let ng = self.needs(a) || self.needs(b);
        self.push(t, Op::Add { a, b }, ng)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu { x }, |v| v.max(0.0))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.map(x, Op::LeakyRelu { x, slope }, |v| if v > 0.0 { v } else { slope * v })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh { x }, f64::tanh)
    }

    pub fn atanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Atanh { x }, f64::atanh)
    }

    /// `scale·x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        self.map(x, Op::Affine { x, scale }, |v| scale * v + shift)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, Op::Clamp { x, lo, hi }, |v| v.clamp(lo, hi))
    }

    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = vec![0usize; n * c * ho * wo];
        {
            let src = self.value(x).data();
            let dst = out.data_mut();
            for plane in 0..n * c {
                let base = plane * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = base + 2 * oy * w + 2 * ox;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                        let o = plane * ho * wo + oy * wo + ox;
                        dst[o] = src[best];
                        argmax[o] = best;
                    }
                }
            }
        }
        let ng = self.needs(x);
        self.push(out, Op::MaxPool2 { x, argmax }, ng)
    }

    /// `[n, c, h, w] → [n, c]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = (h * w) as f64;
        let data = self
            .value(x)
            .data()
            .chunks(h * w)
            .map(|p| p.iter().sum::<f64>() / hw)
            .collect();
        let t = Tensor::from_vec(&[n, c], data);
        let ng = self.needs(x);
        self.push(t, Op::GlobalAvgPool { x }, ng)
    }

    /// `[n, ...] → [n, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = v.shape()[0];
        let t = v.clone().reshaped(&[n, v.len() / n]);
        let ng = self.needs(x);
        self.push(t, Op::Flatten { x }, ng)
    }

    /// Dense layer: `x: [n, in]`, `w: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let (n, fin) = (xv.shape()[0], xv.shape()[1]);
        let fout = wv.shape()[0];
        assert_eq!(wv.shape()[1], fin, "linear: input width mismatch");
        let mut out = Tensor::zeros(&[n, fout]);
        {
            let bv = self.value(b).data();
            let od = out.data_mut();
            for row in od.chunks_mut(fout) {
                row.copy_from_slice(bv);
            }
            gemm(n, fin, fout, xv.data(), Layout::row_major(fin), wv.data(), Layout::transposed(fin), 1.0, od);
        }
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, Op::Linear { x, w, b }, ng)
    }

    /// `mean((x − target)²)` as a scalar node.
    pub fn squared_error_to_const(&mut self, x: Var, target: f64) -> Var {
        let v = self.value(x);
        let m = v.data().iter().map(|s| (s - target).powi(2)).sum::<f64>() / v.len() as f64;
        let ng = self.needs(x);
        self.push(Tensor::from_vec(&[1], vec![m]), Op::SquaredErrorToConst { x, target }, ng)
    }

    /// `mean(|a − b|)` as a scalar node.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "l1_mean: shape mismatch");
        let m = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / av.len() as f64;
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::from_vec(&[1], vec![m]), Op::L1Mean { a, b }, ng)
    }

    /// Mean binary cross-entropy of logits `z` against 0/1 `targets`.
    pub fn bce_with_logits(&mut self, z: Var, targets: Vec<f64>) -> Var {
        let zv = self.value(z);
        assert_eq!(zv.len(), targets.len(), "bce: one target per logit");
        let m = zv
            .data()
            .iter()
            .zip(&targets)
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / targets.len() as f64;
        let ng = self.needs(z);
        self.push(Tensor::from_vec(&[1], vec![m]), Op::BceWithLogits { z, targets }, ng)
    }

    /// `Σ wᵢ·sᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let m = terms.iter().map(|&(v, c)| c * self.scalar(v)).sum();
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        self.push(Tensor::from_vec(&[1], vec![m]), Op::WeightedSum { terms: terms.to_vec() }, ng)
    }

    /// Reverse sweep from scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let (n, c, h, wd) = self.value(*x).dims4();
                let (co, _, k, _) = self.value(*w).dims4();
                let (_, _, ho, wo) = out.dims4();
                let (kk, p) = (c * k * k, ho * wo);
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], &[co], |db| {
                        for i in 0..n {
                            for (oc, chunk) in gd[i * co * p..(i + 1) * co * p].chunks(p).enumerate() {
                                db[oc] += chunk.iter().sum::<f64>();
                            }
                        }
                    });
                }
                let need_w = self.needs(*w);
                let need_x = self.needs(*x);
                let mut dw = need_w.then(|| grads[w.0].take().unwrap_or_else(|| Tensor::zeros(&[co, c, k, k])));
                let mut dx = need_x.then(|| grads[x.0].take().unwrap_or_else(|| Tensor::zeros(&[n, c, h, wd])));
                with_scratch(kk * p, |cols, dcols| {
                    for i in 0..n {
                        let gi = &gd[i * co * p..(i + 1) * co * p];
                        if let Some(dw) = dw.as_mut() {
                            im2col(&xv[i * c * h * wd..(i + 1) * c * h * wd], c, h, wd, k, *stride, *pad, cols);
                            gemm(co, p, kk, gi, Layout::row_major(p), cols, Layout::transposed(p), 1.0, dw.data_mut());
                        }
                        if let Some(dx) = dx.as_mut() {
                            gemm(kk, co, p, wv, Layout::transposed(kk), gi, Layout::row_major(p), 0.0, dcols);
                            col2im(dcols, c, h, wd, k, *stride, *pad, &mut dx.data_mut()[i * c * h * wd..(i + 1) * c * h * wd]);
                        }
                    }
                });
                if let Some(dw) = dw {
                    grads[w.0] = Some(dw);
                }
                if let Some(dx) = dx {
                    grads[x.0] = Some(dx);
                }
            }
            Op::Upsample2 { x } => {
                let (n, c, h, w) = self.value(*x).dims4();
                accumulate(&mut grads[x.0], &[n, c, h, w], |dx| {
                    for plane in 0..n * c {
                        let gp = &gd[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                        let dp = &mut dx[plane * h * w..(plane + 1) * h * w];
                        for y in 0..2 * h {
                            for xx in 0..2 * w {
                                dp[(y / 2) * w + xx / 2] += gp[y * 2 * w + xx];
                            }
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if self.needs(*v) {
                        accumulate(&mut grads[v.0], out.shape(), |d| {
                            d.iter_mut().zip(gd).for_each(|(d, g)| *d += g)
                        });
                    }
                }
            }
            Op::Relu { x } => self.unary(*x, out, g, grads, |_, y| if y > 0.0 { 1.0 } else { 0.0 }),
            Op::LeakyRelu { x, slope } => {
                let s = *slope;
                self.unary(*x, out, g, grads, move |xin, _| if xin > 0.0 { 1.0 } else { s })
            }
            Op::Tanh { x } => self.unary(*x, out, g, grads, |_, y| 1.0 - y * y),
            Op::Atanh { x } => self.unary(*x, out, g, grads, |xin, _| 1.0 / (1.0 - xin * xin)),
            Op::Affine { x, scale } => {
                let s = *scale;
                self.unary(*x, out, g, grads, move |_, _| s)
            }
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                self.unary(*x, out, g, grads, move |xin, _| if xin > lo && xin < hi { 1.0 } else { 0.0 })
            }
            Op::MaxPool2 { x, argmax } => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(&mut grads[x.0], &shape, |dx| {
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += gd[o];
                    }
                });
            }
            Op::GlobalAvgPool { x } => {
                let shape = self.value(*x).shape().to_vec();
                let hw = shape[2] * shape[3];
                accumulate(&mut grads[x.0], &shape, |dx| {
                    for (plane, chunk) in dx.chunks_mut(hw).enumerate() {
                        let gv = gd[plane] / hw as f64;
                        chunk.iter_mut().for_each(|d| *d += gv);
                    }
                });
            }
            Op::Flatten { x } => {
                let shape = self.value(*x).shape().to_vec();
                accumulate(&mut grads[x.0], &shape, |dx| {
                    dx.iter_mut().zip(gd).for_each(|(d, g)| *d += g)
                });
            }
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (n, fin) = (xv.shape()[0], xv.shape()[1]);
                let fout = wv.shape()[0];
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], &[fout], |db| {
                        for row in gd.chunks(fout) {
                            db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                        }
                    });
                }
                if self.needs(*w) {
                    accumulate(&mut grads[w.0], &[fout, fin], |dw| {
                        gemm(fout, n, fin, gd, Layout::transposed(fout), xv.data(), Layout::row_major(fin), 1.0, dw)
                    });
                }
                if self.needs(*x) {
                    accumulate(&mut grads[x.0], &[n, fin], |dx| {
                        gemm(n, fout, fin, gd, Layout::row_major(fout), wv.data(), Layout::row_major(fin), 1.0, dx)
                    });
                }
            }
            Op::SquaredErrorToConst { x, target } => {
                let xv = self.value(*x);
                let scale = 2.0 * gd[0] / xv.len() as f64;
                accumulate(&mut grads[x.0], xv.shape(), |dx| {
                    dx.iter_mut().zip(xv.data()).for_each(|(d, &v)| *d += scale * (v - target))
                });
            }
            Op::L1Mean { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = gd[0] / av.len() as f64;
                let sign = |x: f64, y: f64| {
                    if x > y {
                        1.0
                    } else if x < y {
                        -1.0
                    } else {
                        0.0
                    }
                };
                if self.needs(*a) {
                    accumulate(&mut grads[a.0], av.shape(), |d| {
                        for (i, d) in d.iter_mut().enumerate() {
                            *d += scale * sign(av.data()[i], bv.data()[i]);
                        }
                    });
                }
                if self.needs(*b) {
                    accumulate(&mut grads[b.0], bv.shape(), |d| {
                        for (i, d) in d.iter_mut().enumerate() {
                            *d -= scale * sign(av.data()[i], bv.data()[i]);
                        }
                    });
                }
            }
            Op::BceWithLogits { z, targets } => {
                let zv = self.value(*z);
                let scale = gd[0] / targets.len() as f64;
                accumulate(&mut grads[z.0], zv.shape(), |dz| {
                    for ((d, &zi), &y) in dz.iter_mut().zip(zv.data()).zip(targets) {
                        *d += scale * (sigmoid(zi) - y);
                    }
                });
            }
            Op::WeightedSum { terms } => {
                for &(v, c) in terms {
                    if self.needs(v) {
                        accumulate(&mut grads[v.0], &[1], |d| d[0] += c * gd[0]);
                    }
                }
            }
        }
    }

    /// Elementwise op with local derivative `deriv(input, output)`.
    fn unary(
        &self,
        x: Var,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        deriv: impl Fn(f64, f64) -> f64,
    ) {
        let xv = self.value(x).data();
        accumulate(&mut grads[x.0], out.shape(), |dx| {
            for i in 0..dx.len() {
                dx[i] += g.data()[i] * deriv(xv[i], out.data()[i]);
            }
        });
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

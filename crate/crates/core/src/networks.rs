//! Network definitions shared by the translator and the classifiers. Each
//! network is a parameter layout plus a forward function over a [`Graph`];
//! parameters are consumed in the order they were pushed at init.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Var};
use crate::params::{push_conv, push_conv_he, push_linear_he, ParamSet};
use crate::tensor::Tensor;

/// Walks bound parameter handles in order.
pub(crate) struct Cursor<'a> {
    vars: std::slice::Iter<'a, Var>,
}

impl<'a> Cursor<'a> {
    pub fn new(vars: &'a [Var]) -> Self {
        Cursor { vars: vars.iter() }
    }

    fn next(&mut self) -> Var {
        *self.vars.next().expect("parameter layout shorter than forward pass")
    }

    /// `(weight, bias)` pair.
    fn pair(&mut self) -> (Var, Var) {
        let w = self.next();
        let b = self.next();
        (w, b)
    }
}

fn push_conv_he_normal(ps: &mut ParamSet, name: &str, ci: usize, co: usize, k: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / (ci * k * k) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let w = (0..co * ci * k * k).map(|_| normal.sample(rng)).collect();
    ps.push(format!("{name}.weight"), Tensor::from_vec(&[co, ci, k, k], w));
    ps.push(format!("{name}.bias"), Tensor::zeros(&[co]));
}

/// Pixels are pulled this far inside (0, 1) before the inverse-tanh skip.
const SKIP_MARGIN: f64 = 1e-3;

/// Encoder (two stride-2 convs), residual trunk, decoder (two 2× upsample +
/// conv stages). The decoder output is added to `atanh(2x−1)` and squashed
/// with `(tanh(·)+1)/2`, so a zero decoder reproduces the input and every
/// output lies in `[0, 1]`.
pub mod generator {
    use super::*;

    pub fn init(c: usize, n_res: usize, rng: &mut ChaCha8Rng) -> ParamSet {
        let mut ps = ParamSet::new();
        push_conv_he_normal(&mut ps, "stem", 1, c, 7, rng);
        push_conv_he_normal(&mut ps, "down1", c, 2 * c, 3, rng);
        push_conv_he_normal(&mut ps, "down2", 2 * c, 4 * c, 3, rng);
        for i in 0..n_res {
            push_conv_he_normal(&mut ps, &format!("res{i}.conv1"), 4 * c, 4 * c, 3, rng);
            // Residual branches start small so the trunk begins near identity.
            push_conv(&mut ps, &format!("res{i}.conv2"), 4 * c, 4 * c, 3, 0.02, rng);
        }
        push_conv_he_normal(&mut ps, "up1", 4 * c, 2 * c, 3, rng);
        push_conv_he_normal(&mut ps, "up2", 2 * c, c, 3, rng);
        push_conv(&mut ps, "out", c, 1, 7, 0.02, rng);
        ps
    }

    pub fn forward(g: &mut Graph, vars: &[Var], n_res: usize, x: Var) -> Var {
        let mut p = Cursor::new(vars);
        let (w, b) = p.pair();
        let h = g.conv2d(x, w, b, 1, 3);
        let mut h = g.relu(h);
        for _ in 0..2 {
            let (w, b) = p.pair();
            let z = g.conv2d(h, w, b, 2, 1);
            h = g.relu(z);
        }
        for _ in 0..n_res {
            let (w1, b1) = p.pair();
            let (w2, b2) = p.pair();
            let z = g.conv2d(h, w1, b1, 1, 1);
            let z = g.relu(z);
            let z = g.conv2d(z, w2, b2, 1, 1);
            h = g.add(h, z);
        }
        for _ in 0..2 {
            let (w, b) = p.pair();
            let u = g.upsample2(h);
            let z = g.conv2d(u, w, b, 1, 1);
            h = g.relu(z);
        }
        let (w, b) = p.pair();
        let dec = g.conv2d(h, w, b, 1, 3);
        let centred = g.affine(x, 2.0, -1.0);
        let centred = g.clamp(centred, -1.0 + 2.0 * SKIP_MARGIN, 1.0 - 2.0 * SKIP_MARGIN);
        let skip = g.atanh(centred);
        let pre = g.add(dec, skip);
        let t = g.tanh(pre);
        g.affine(t, 0.5, 0.5)
    }
}

/// Three-layer strided patch scorer: two stride-2 4×4 convs with leaky ReLU
/// and a 1-channel 3×3 head. Output is an `[n, 1, s/4, s/4]` score grid.
pub mod discriminator {
    use super::*;

    pub fn init(c: usize, rng: &mut ChaCha8Rng) -> ParamSet {
        let mut ps = ParamSet::new();
        push_conv_he_normal(&mut ps, "conv1", 1, c, 4, rng);
        push_conv_he_normal(&mut ps, "conv2", c, 2 * c, 4, rng);
        push_conv(&mut ps, "head", 2 * c, 1, 3, 0.02, rng);
        ps
    }

    pub fn forward(g: &mut Graph, vars: &[Var], x: Var) -> Var {
        let mut p = Cursor::new(vars);
        let (w, b) = p.pair();
        let h = g.conv2d(x, w, b, 2, 1);
        let h = g.leaky_relu(h, 0.2);
        let (w, b) = p.pair();
        let h = g.conv2d(h, w, b, 2, 1);
        let h = g.leaky_relu(h, 0.2);
        let (w, b) = p.pair();
        g.conv2d(h, w, b, 1, 1)
    }
}

/// Three conv blocks (conv + ReLU + 2×2 max-pool) then two dense layers. The
/// first conv has stride 2, so the flattened grid is `image_size / 16`.
pub mod mini_alexnet {
    use super::*;

    pub const WIDTHS: [usize; 3] = [8, 16, 32];
    pub const HIDDEN: usize = 64;

    pub fn init(image_size: usize, rng: &mut ChaCha8Rng) -> ParamSet {
        let mut ps = ParamSet::new();
        push_conv_he(&mut ps, "conv1", 1, WIDTHS[0], 5, rng);
        push_conv_he(&mut ps, "conv2", WIDTHS[0], WIDTHS[1], 3, rng);
        push_conv_he(&mut ps, "conv3", WIDTHS[1], WIDTHS[2], 3, rng);
        let side = image_size / 16;
        push_linear_he(&mut ps, "fc1", WIDTHS[2] * side * side, HIDDEN, rng);
        push_linear_he(&mut ps, "fc2", HIDDEN, 1, rng);
        ps
    }

    pub fn forward(g: &mut Graph, vars: &[Var], x: Var) -> Var {
        let mut p = Cursor::new(vars);
        let mut h = x;
        for (stride, pad) in [(2, 2), (1, 1), (1, 1)] {
            let (w, b) = p.pair();
            let z = g.conv2d(h, w, b, stride, pad);
            let z = g.relu(z);
            h = g.max_pool2(z);
        }
        let f = g.flatten(h);
        let (w, b) = p.pair();
        let z = g.linear(f, w, b);
        let z = g.relu(z);
        let (w, b) = p.pair();
        let logits = g.linear(z, w, b);
        g.flatten(logits)
    }
}

/// Stride-2 stem with a 2×2 max-pool, three basic residual blocks (the last two downsample with
/// a 1×1 projection shortcut), global average pooling and a dense head.
pub mod mini_resnet {
    use super::*;

    pub const WIDTHS: [usize; 3] = [8, 16, 32];

    pub fn init(rng: &mut ChaCha8Rng) -> ParamSet {
        let mut ps = ParamSet::new();
        push_conv_he(&mut ps, "stem", 1, WIDTHS[0], 3, rng);
        let mut cin = WIDTHS[0];
        for (i, &cout) in WIDTHS.iter().enumerate() {
            push_conv_he(&mut ps, &format!("block{i}.conv1"), cin, cout, 3, rng);
            push_conv_he(&mut ps, &format!("block{i}.conv2"), cout, cout, 3, rng);
            if i > 0 {
                push_conv_he(&mut ps, &format!("block{i}.proj"), cin, cout, 1, rng);
            }
            cin = cout;
        }
        push_linear_he(&mut ps, "fc", cin, 1, rng);
        ps
    }

    pub fn forward(g: &mut Graph, vars: &[Var], x: Var) -> Var {
        let mut p = Cursor::new(vars);
        // Centre the inputs; without it training can sit at chance for most
        // of the epoch budget.
        let x = g.affine(x, 1.0, -0.5);
        let (w, b) = p.pair();
        let h = g.conv2d(x, w, b, 2, 1);
        let h = g.relu(h);
        let mut h = g.max_pool2(h);
        for i in 0..WIDTHS.len() {
            let stride = if i == 0 { 1 } else { 2 };
            let (w1, b1) = p.pair();
            let (w2, b2) = p.pair();
            let z = g.conv2d(h, w1, b1, stride, 1);
            let z = g.relu(z);
            let z = g.conv2d(z, w2, b2, 1, 1);
            let shortcut = if i == 0 {
                h
            } else {
                let (wp, bp) = p.pair();
                g.conv2d(h, wp, bp, stride, 0)
            };
            let s = g.add(z, shortcut);
            h = g.relu(s);
        }
        let pooled = g.global_avg_pool(h);
        let (w, b) = p.pair();
        let logits = g.linear(pooled, w, b);
        g.flatten(logits)
    }
}

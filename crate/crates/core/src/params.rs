//! Named parameter tensors, initialisation and the Adam optimiser.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, Grads, Var};
use crate::tensor::Tensor;

/// Ordered collection of named tensors. Order is the serialisation order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Places every tensor on `g` as a trainable leaf (`trainable = false`
    /// records them as constants instead).
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|(_, t)| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
                .collect(),
        }
    }

    /// Gradients for every entry, in order, zero-filled where absent.
    pub fn collect_grads(&self, bound: &Bound, grads: &mut Grads) -> Vec<Tensor> {
        self.entries
            .iter()
            .zip(&bound.vars)
            .map(|((_, t), &v)| grads.take_or_zeros(v, t.shape()))
            .collect()
    }

    /// Rebuilds a set with the same names/shapes from flat `f64` values.
    pub fn with_values(&self, flat: &[f64]) -> ParamSet {
        assert_eq!(flat.len(), self.num_scalars());
        let mut off = 0;
        let entries = self
            .entries
            .iter()
            .map(|(n, t)| {
                let v = flat[off..off + t.len()].to_vec();
                off += t.len();
                (n.clone(), Tensor::from_vec(t.shape(), v))
            })
            .collect();
        ParamSet { entries }
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }
}

/// Graph handles for a bound [`ParamSet`], in entry order.
pub struct Bound {
    pub vars: Vec<Var>,
}

impl Bound {
    pub fn at(&self, i: usize) -> Var {
        self.vars[i]
    }
}

/// Adds a `[co, ci, k, k]` kernel plus bias drawn from N(0, std²).
pub fn push_conv(ps: &mut ParamSet, name: &str, ci: usize, co: usize, k: usize, std: f64, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, std).expect("finite std");
    let w = (0..co * ci * k * k).map(|_| normal.sample(rng)).collect();
    ps.push(format!("{name}.weight"), Tensor::from_vec(&[co, ci, k, k], w));
    ps.push(format!("{name}.bias"), Tensor::zeros(&[co]));
}

/// He-uniform conv init, used by the classifiers.
pub fn push_conv_he(ps: &mut ParamSet, name: &str, ci: usize, co: usize, k: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / (ci * k * k) as f64).sqrt();
    let w = (0..co * ci * k * k).map(|_| rng.random_range(-bound..bound)).collect();
    ps.push(format!("{name}.weight"), Tensor::from_vec(&[co, ci, k, k], w));
    ps.push(format!("{name}.bias"), Tensor::zeros(&[co]));
}

/// He-uniform dense init `[out, in]`.
pub fn push_linear_he(ps: &mut ParamSet, name: &str, fin: usize, fout: usize, rng: &mut ChaCha8Rng) {
    let bound = (6.0 / fin as f64).sqrt();
    let w = (0..fout * fin).map(|_| rng.random_range(-bound..bound)).collect();
    ps.push(format!("{name}.weight"), Tensor::from_vec(&[fout, fin], w));
    ps.push(format!("{name}.bias"), Tensor::zeros(&[fout]));
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = self.lr * bc2.sqrt() / bc1;
        for (((p, g), m), v) in params.tensors_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= step * *m / (v.sqrt() + self.eps * bc2.sqrt());
            }
        }
    }
}

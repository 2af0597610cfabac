//! Analytic translator gradients against central finite differences on a
//! tiny model (8×8 images, base 4 channels), in double precision.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uda_core::params::ParamSet;
use uda_core::seed::rng_from;
use uda_core::tensor::Tensor;
use uda_core::translator::{
    discriminator_gradients, discriminator_objective, generator_gradients, generator_objective, init_translator,
    Direction, TranslatorConfig, TranslatorModel,
};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const KINK_GAP: f64 = 1e-3;
/// Checked entries per tensor.
const PER_TENSOR: usize = 6;

fn batch(rng: &mut ChaCha8Rng, n: usize, size: usize) -> Tensor {
    let data = (0..n * size * size).map(|_| rng.random_range(0.1..0.9)).collect();
    Tensor::from_vec(&[n, 1, size, size], data)
}

fn flatten(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

/// Indices to probe: a few random entries from every tensor.
fn probe_indices(ps: &ParamSet, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut off = 0;
    for (_, t) in ps.iter() {
        for _ in 0..PER_TENSOR.min(t.len()) {
            out.push(off + rng.random_range(0..t.len()));
        }
        off += t.len();
    }
    out
}

/// Relative error with an absolute floor for gradients that are ~0.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-7 {
        (analytic - numeric).abs() / 1e-7
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn max_rel_err(ps: &ParamSet, analytic: &[f64], idx: &[usize], f: impl Fn(&ParamSet) -> f64) -> f64 {
    let base = ps.flat_values();
    idx.iter()
        .map(|&i| {
            let mut v = base.clone();
            v[i] = base[i] + H;
            let up = f(&ps.with_values(&v));
            v[i] = base[i] - H;
            let down = f(&ps.with_values(&v));
            rel_err(analytic[i], (up - down) / (2.0 * H))
        })
        .fold(0.0, f64::max)
}

/// A tiny translator whose generators are pushed away from the identity so
/// the cycle and identity L1 terms are not evaluated at their kink.
fn tiny_model(lambda_id: f64, seed: u64) -> TranslatorModel {
    let cfg = TranslatorConfig {
        base_channels: 4,
        n_residual_blocks: 1,
        lambda_cyc: 10.0,
        lambda_id,
        seed,
        ..TranslatorConfig::default()
    };
    let mut model = init_translator(&cfg, 8).unwrap();
    let mut rng = rng_from(seed ^ 0x5eed);
    for gen in [&mut model.gen_ab, &mut model.gen_ba] {
        let mut flat = gen.flat_values();
        let mut off = 0;
        for (name, t) in gen.iter() {
            if name.starts_with("out.") || name.ends_with("conv2.weight") {
                for v in &mut flat[off..off + t.len()] {
                    *v = rng.random_range(-0.3..0.3);
                }
            }
            off += t.len();
        }
        *gen = gen.with_values(&flat);
    }
    model
}

fn min_abs_diff(x: &Tensor, y: &Tensor) -> f64 {
    x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).fold(f64::INFINITY, f64::min)
}

fn off_kinks(model: &TranslatorModel, a: &Tensor, b: &Tensor) -> bool {
    let fake_b = model.generate(Direction::AToB, a);
    let fake_a = model.generate(Direction::BToA, b);
    let rec_a = model.generate(Direction::BToA, &fake_b);
    let rec_b = model.generate(Direction::AToB, &fake_a);
    let mut gap = min_abs_diff(&rec_a, a).min(min_abs_diff(&rec_b, b));
    if model.config.lambda_id > 0.0 {
        gap = gap
            .min(min_abs_diff(&model.generate(Direction::AToB, b), b))
            .min(min_abs_diff(&model.generate(Direction::BToA, a), a));
    }
    gap > KINK_GAP
}

/// Redraws the input batches until no L1 argument is within `KINK_GAP` of 0.
fn jittered_batches(model: &TranslatorModel, rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    for _ in 0..100 {
        let a = batch(rng, 2, 8);
        let b = batch(rng, 2, 8);
        if off_kinks(model, &a, &b) {
            return (a, b);
        }
    }
    panic!("could not draw inputs away from the L1 kinks");
}

fn generator_max_err(lambda_id: f64, seed: u64) -> f64 {
    let model = tiny_model(lambda_id, seed);
    let mut rng = rng_from(seed);
    let (a, b) = jittered_batches(&model, &mut rng);
    let (_, g_ab, g_ba) = generator_gradients(&model, &a, &b).unwrap();

    let idx = probe_indices(&model.gen_ab, &mut rng);
    let err_ab = max_rel_err(&model.gen_ab, &flatten(&g_ab), &idx, |ps| {
        let m = TranslatorModel {
            gen_ab: ps.clone(),
            ..model.clone()
        };
        generator_objective(&m, &a, &b).unwrap().0
    });
    let idx = probe_indices(&model.gen_ba, &mut rng);
    let err_ba = max_rel_err(&model.gen_ba, &flatten(&g_ba), &idx, |ps| {
        let m = TranslatorModel {
            gen_ba: ps.clone(),
            ..model.clone()
        };
        generator_objective(&m, &a, &b).unwrap().0
    });
    err_ab.max(err_ba)
}

#[test]
fn generator_objective_gradient_matches_finite_differences() {
    let err = generator_max_err(0.0, 11);
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn generator_gradient_includes_identity_term() {
    let err = generator_max_err(5.0, 12);
    assert!(err <= TOL, "max relative error {err:e}");
}

#[test]
fn discriminator_objective_gradient_matches_finite_differences() {
    let model = tiny_model(0.0, 13);
    let mut rng = rng_from(13);
    let real = batch(&mut rng, 2, 8);
    let fake = batch(&mut rng, 2, 8);
    for disc in [&model.disc_a, &model.disc_b] {
        let (loss, grads) = discriminator_gradients(disc, &real, &fake).unwrap();
        assert_eq!(loss, discriminator_objective(disc, &real, &fake).unwrap());
        let idx = probe_indices(disc, &mut rng);
        let err = max_rel_err(disc, &flatten(&grads), &idx, |ps| {
            discriminator_objective(ps, &real, &fake).unwrap()
        });
        assert!(err <= TOL, "max relative error {err:e}");
    }
}

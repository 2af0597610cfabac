//! Cycle-consistent adversarial translation between two unlabeled domains.
//!
//! Two generators (`gen_ab`, `gen_ba`) and two patch discriminators
//! (`disc_a`, `disc_b`) are trained with least-squares adversarial losses,
//! an L1 cycle-consistency penalty and an optional L1 identity penalty.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{quantize, DomainDataset, ImageSample, Provenance, SYN_SUFFIX};
use crate::error::{Error, Result};
use crate::networks::{discriminator, generator};
use crate::params::{Adam, ParamSet};
use crate::seed::{derive_seed, rng_from};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TranslatorConfig {
    pub base_channels: usize,
    pub n_residual_blocks: usize,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub image_pool_size: usize,
    pub seed: u64,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        TranslatorConfig {
            base_channels: 8,
            n_residual_blocks: 2,
            lambda_cyc: 10.0,
            lambda_id: 0.0,
            learning_rate: 2e-4,
            beta1: 0.5,
            steps: 2000,
            batch_size: 1,
            image_pool_size: 50,
            seed: 0,
        }
    }
}

impl TranslatorConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("translator.{f}");
        if self.base_channels == 0 {
            return Err(Error::validation(field("base_channels"), "must be positive"));
        }
        if !(self.lambda_cyc.is_finite() && self.lambda_cyc >= 0.0) {
            return Err(Error::validation(field("lambda_cyc"), "must be nonnegative"));
        }
        if !(self.lambda_id.is_finite() && self.lambda_id >= 0.0) {
            return Err(Error::validation(field("lambda_id"), "must be nonnegative"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation(field("learning_rate"), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::validation(field("beta1"), "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation(field("batch_size"), "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AToB,
    BToA,
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a_to_b" => Ok(Direction::AToB),
            "b_to_a" => Ok(Direction::BToA),
            other => Err(Error::validation("direction", format!("expected a_to_b|b_to_a, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TranslatorModel {
    pub gen_ab: ParamSet,
    pub gen_ba: ParamSet,
    pub disc_a: ParamSet,
    pub disc_b: ParamSet,
    pub config: TranslatorConfig,
    pub image_size: usize,
    pub step_count: usize,
}

/// Deterministic initialisation from `cfg.seed`.
pub fn init_translator(cfg: &TranslatorConfig, image_size: usize) -> Result<TranslatorModel> {
    cfg.validate()?;
    if image_size == 0 || image_size % 4 != 0 {
        return Err(Error::validation(
            "image_size",
            format!("{image_size} is not divisible by 4 (two stride-2 stages)"),
        ));
    }
    let c = cfg.base_channels;
    let rng = |tag: &str| rng_from(derive_seed(cfg.seed, &["translator-init", tag]));
    Ok(TranslatorModel {
        gen_ab: generator::init(c, cfg.n_residual_blocks, &mut rng("gen_ab")),
        gen_ba: generator::init(c, cfg.n_residual_blocks, &mut rng("gen_ba")),
        disc_a: discriminator::init(c, &mut rng("disc_a")),
        disc_b: discriminator::init(c, &mut rng("disc_b")),
        config: cfg.clone(),
        image_size,
        step_count: 0,
    })
}

/// Mean of `(s − t)²` with `t = 1` for real and `0` for fake.
pub fn lsgan_loss(scores: &Tensor, target_is_real: bool) -> f64 {
    let t = if target_is_real { 1.0 } else { 0.0 };
    scores.data().iter().map(|s| (s - t).powi(2)).sum::<f64>() / scores.len() as f64
}

/// Mean absolute difference.
pub fn l1_mean(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::Shape(format!("l1_mean: {:?} vs {:?}", x.shape(), y.shape())));
    }
    Ok(x.data().iter().zip(y.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / x.len() as f64)
}

/// Separately reported terms of the generator objective. `cycle` and
/// `identity` are unweighted sums over both directions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTerms {
    pub adv_ab: f64,
    pub adv_ba: f64,
    pub cycle: f64,
    pub identity: f64,
    pub total: f64,
}

struct GeneratorPass {
    graph: Graph,
    gen_ab: Vec<Var>,
    gen_ba: Vec<Var>,
    fake_b: Var,
    fake_a: Var,
    total: Var,
    terms: GeneratorTerms,
}

fn check_finite(value: f64, step: usize, component: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            component: component.into(),
        })
    }
}

fn check_batches(model: &TranslatorModel, a: &Tensor, b: &Tensor) -> Result<()> {
    let (na, ca, ha, wa) = a.dims4();
    let (nb, cb, hb, wb) = b.dims4();
    let s = model.image_size;
    if na != nb {
        return Err(Error::Shape(format!("batch sizes differ: {na} vs {nb}")));
    }
    if (ca, ha, wa) != (1, s, s) || (cb, hb, wb) != (1, s, s) {
        return Err(Error::Shape(format!("expected [n, 1, {s}, {s}] batches")));
    }
    Ok(())
}

fn generator_pass(model: &TranslatorModel, a: &Tensor, b: &Tensor, step: usize) -> Result<GeneratorPass> {
    check_batches(model, a, b)?;
    let cfg = &model.config;
    let n_res = cfg.n_residual_blocks;
    let mut g = Graph::new();
    let gab = model.gen_ab.bind(&mut g, true).vars;
    let gba = model.gen_ba.bind(&mut g, true).vars;
    let da = model.disc_a.bind(&mut g, false).vars;
    let db = model.disc_b.bind(&mut g, false).vars;
    let real_a = g.constant(a.clone());
    let real_b = g.constant(b.clone());

    let fake_b = generator::forward(&mut g, &gab, n_res, real_a);
    let fake_a = generator::forward(&mut g, &gba, n_res, real_b);
    let score_b = discriminator::forward(&mut g, &db, fake_b);
    let score_a = discriminator::forward(&mut g, &da, fake_a);
    let adv_ab = g.squared_error_to_const(score_b, 1.0);
    let adv_ba = g.squared_error_to_const(score_a, 1.0);
    let mut terms = vec![(adv_ab, 1.0), (adv_ba, 1.0)];

    let rec_a = generator::forward(&mut g, &gba, n_res, fake_b);
    let rec_b = generator::forward(&mut g, &gab, n_res, fake_a);
    let cyc_a = g.l1_mean(rec_a, real_a);
    let cyc_b = g.l1_mean(rec_b, real_b);
    let cycle = g.weighted_sum(&[(cyc_a, 1.0), (cyc_b, 1.0)]);
    if cfg.lambda_cyc > 0.0 {
        terms.push((cycle, cfg.lambda_cyc));
    }

    let identity = if cfg.lambda_id > 0.0 {
        let same_b = generator::forward(&mut g, &gab, n_res, real_b);
        let same_a = generator::forward(&mut g, &gba, n_res, real_a);
        let id_b = g.l1_mean(same_b, real_b);
        let id_a = g.l1_mean(same_a, real_a);
        let id = g.weighted_sum(&[(id_b, 1.0), (id_a, 1.0)]);
        terms.push((id, cfg.lambda_id));
        g.scalar(id)
    } else {
        0.0
    };
    let total = g.weighted_sum(&terms);

    let terms = GeneratorTerms {
        adv_ab: g.scalar(adv_ab),
        adv_ba: g.scalar(adv_ba),
        cycle: g.scalar(cycle),
        identity,
        total: g.scalar(total),
    };
    check_finite(terms.adv_ab, step, "adversarial loss (A->B)")?;
    check_finite(terms.adv_ba, step, "adversarial loss (B->A)")?;
    check_finite(terms.cycle, step, "cycle loss")?;
    check_finite(terms.identity, step, "identity loss")?;
    check_finite(terms.total, step, "generator total")?;
    Ok(GeneratorPass {
        graph: g,
        gen_ab: gab,
        gen_ba: gba,
        fake_b,
        fake_a,
        total,
        terms,
    })
}

/// Generator objective on one pair of unpaired batches:
/// `adv(D_B(G(a))) + adv(D_A(F(b))) + λ_cyc·(|F(G(a))−a| + |G(F(b))−b|)
///  + λ_id·(|G(b)−b| + |F(a)−a|)`.
pub fn generator_objective(model: &TranslatorModel, batch_a: &Tensor, batch_b: &Tensor) -> Result<(f64, GeneratorTerms)> {
    let pass = generator_pass(model, batch_a, batch_b, 0)?;
    Ok((pass.terms.total, pass.terms))
}

/// Gradients of [`generator_objective`] w.r.t. `gen_ab` and `gen_ba`.
pub fn generator_gradients(
    model: &TranslatorModel,
    batch_a: &Tensor,
    batch_b: &Tensor,
) -> Result<(GeneratorTerms, Vec<Tensor>, Vec<Tensor>)> {
    let pass = generator_pass(model, batch_a, batch_b, 0)?;
    let (gab, gba) = backprop_generators(model, &pass);
    Ok((pass.terms, gab, gba))
}

fn backprop_generators(model: &TranslatorModel, pass: &GeneratorPass) -> (Vec<Tensor>, Vec<Tensor>) {
    let mut grads = pass.graph.backward(pass.total);
    let collect = |ps: &ParamSet, vars: &[Var], grads: &mut crate::autodiff::Grads| -> Vec<Tensor> {
        ps.iter()
            .zip(vars)
            .map(|((_, t), &v)| grads.take_or_zeros(v, t.shape()))
            .collect()
    };
    let gab = collect(&model.gen_ab, &pass.gen_ab, &mut grads);
    let gba = collect(&model.gen_ba, &pass.gen_ba, &mut grads);
    (gab, gba)
}

/// `½·[adv(D(real), real) + adv(D(fake), fake)]`. `fake` is a plain tensor,
/// so no gradient can reach the generator that produced it.
pub fn discriminator_objective(disc: &ParamSet, real: &Tensor, fake: &Tensor) -> Result<f64> {
    Ok(discriminator_pass(disc, real, fake, false)?.0)
}

/// Value and parameter gradients of [`discriminator_objective`].
pub fn discriminator_gradients(disc: &ParamSet, real: &Tensor, fake: &Tensor) -> Result<(f64, Vec<Tensor>)> {
    let (loss, grads) = discriminator_pass(disc, real, fake, true)?;
    Ok((loss, grads.unwrap_or_default()))
}

fn discriminator_pass(disc: &ParamSet, real: &Tensor, fake: &Tensor, want_grads: bool) -> Result<(f64, Option<Vec<Tensor>>)> {
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!("real {:?} vs fake {:?}", real.shape(), fake.shape())));
    }
    let mut g = Graph::new();
    let bound = disc.bind(&mut g, want_grads);
    let r = g.constant(real.clone());
    let f = g.constant(fake.clone());
    let sr = discriminator::forward(&mut g, &bound.vars, r);
    let sf = discriminator::forward(&mut g, &bound.vars, f);
    let lr = g.squared_error_to_const(sr, 1.0);
    let lf = g.squared_error_to_const(sf, 0.0);
    let total = g.weighted_sum(&[(lr, 0.5), (lf, 0.5)]);
    let loss = g.scalar(total);
    if !want_grads {
        return Ok((loss, None));
    }
    let mut grads = g.backward(total);
    Ok((loss, Some(disc.collect_grads(&bound, &mut grads))))
}

/// One training step's losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub gen_total: f64,
    pub disc_a_loss: f64,
    pub disc_b_loss: f64,
    pub cyc_loss: f64,
    pub id_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

/// Endless reshuffled index stream over one dataset.
struct BatchStream {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    fn new(len: usize, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        BatchStream { order, cursor: 0, rng }
    }

    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        (0..n)
            .map(|_| {
                if self.cursor == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

/// History buffer of generated images for discriminator updates.
struct ImagePool {
    capacity: usize,
    images: Vec<Tensor>,
    rng: ChaCha8Rng,
}

impl ImagePool {
    fn new(capacity: usize, seed: u64) -> Self {
        ImagePool {
            capacity,
            images: Vec::with_capacity(capacity),
            rng: rng_from(seed),
        }
    }

    /// Returns a batch mixing fresh fakes with stored ones (half the time once full).
    fn query(&mut self, fakes: &Tensor) -> Tensor {
        if self.capacity == 0 {
            return fakes.clone();
        }
        let out: Vec<Tensor> = fakes
            .unstack()
            .into_iter()
            .map(|img| {
                if self.images.len() < self.capacity {
                    self.images.push(img.clone());
                    img
                } else if self.rng.random_bool(0.5) {
                    let slot = self.rng.random_range(0..self.capacity);
                    std::mem::replace(&mut self.images[slot], img)
                } else {
                    img
                }
            })
            .collect();
        Tensor::stack(&out.iter().collect::<Vec<_>>())
    }
}

fn require_finite_params(model: &TranslatorModel, step: usize) -> Result<()> {
    for (name, ps) in [
        ("gen_ab parameters", &model.gen_ab),
        ("gen_ba parameters", &model.gen_ba),
        ("disc_a parameters", &model.disc_a),
        ("disc_b parameters", &model.disc_b),
    ] {
        if !ps.all_finite() {
            return Err(Error::NonFinite {
                step,
                component: name.into(),
            });
        }
    }
    Ok(())
}

/// Trains a translator on the pixels of `train_a` and `train_b`. Labels are
/// never read. Each step updates both generators, then both discriminators
/// against pooled fakes.
pub fn train_translator(
    train_a: &DomainDataset,
    train_b: &DomainDataset,
    cfg: &TranslatorConfig,
) -> Result<(TranslatorModel, TrainLog)> {
    train_translator_with(train_a, train_b, cfg, |_| {})
}

/// [`train_translator`] with a per-step callback (progress reporting).
pub fn train_translator_with(
    train_a: &DomainDataset,
    train_b: &DomainDataset,
    cfg: &TranslatorConfig,
    mut on_step: impl FnMut(&StepRecord),
) -> Result<(TranslatorModel, TrainLog)> {
    if train_a.is_empty() {
        return Err(Error::validation("train_a", "dataset is empty"));
    }
    if train_b.is_empty() {
        return Err(Error::validation("train_b", "dataset is empty"));
    }
    if train_a.image_size() != train_b.image_size() {
        return Err(Error::Shape(format!(
            "domain image sizes differ: {} vs {}",
            train_a.image_size(),
            train_b.image_size()
        )));
    }
    let mut model = init_translator(cfg, train_a.image_size())?;
    let seed = |tag: &str| derive_seed(cfg.seed, &["translator-train", tag]);
    let mut stream_a = BatchStream::new(train_a.len(), seed("batches-a"));
    let mut stream_b = BatchStream::new(train_b.len(), seed("batches-b"));
    let mut pool_a = ImagePool::new(cfg.image_pool_size, seed("pool-a"));
    let mut pool_b = ImagePool::new(cfg.image_pool_size, seed("pool-b"));
    let mut opt_gab = Adam::new(&model.gen_ab, cfg.learning_rate, cfg.beta1);
    let mut opt_gba = Adam::new(&model.gen_ba, cfg.learning_rate, cfg.beta1);
    let mut opt_da = Adam::new(&model.disc_a, cfg.learning_rate, cfg.beta1);
    let mut opt_db = Adam::new(&model.disc_b, cfg.learning_rate, cfg.beta1);
    let mut log = TrainLog::default();

    for step in 1..=cfg.steps {
        let a = train_a.batch(&stream_a.next_batch(cfg.batch_size));
        let b = train_b.batch(&stream_b.next_batch(cfg.batch_size));

        let pass = generator_pass(&model, &a, &b, step)?;
        let (g_ab, g_ba) = backprop_generators(&model, &pass);
        let fake_b = pass.graph.value(pass.fake_b).clone();
        let fake_a = pass.graph.value(pass.fake_a).clone();
        let terms = pass.terms;
        drop(pass);
        opt_gab.step(&mut model.gen_ab, &g_ab);
        opt_gba.step(&mut model.gen_ba, &g_ba);

        let pooled_a = pool_a.query(&fake_a);
        let pooled_b = pool_b.query(&fake_b);
        let (loss_a, grad_a) = discriminator_gradients(&model.disc_a, &a, &pooled_a)?;
        check_finite(loss_a, step, "discriminator A loss")?;
        let (loss_b, grad_b) = discriminator_gradients(&model.disc_b, &b, &pooled_b)?;
        check_finite(loss_b, step, "discriminator B loss")?;
        opt_da.step(&mut model.disc_a, &grad_a);
        opt_db.step(&mut model.disc_b, &grad_b);
        require_finite_params(&model, step)?;

        model.step_count = step;
        let rec = StepRecord {
            step,
            gen_total: terms.total,
            disc_a_loss: loss_a,
            disc_b_loss: loss_b,
            cyc_loss: terms.cycle,
            id_loss: terms.identity,
        };
        on_step(&rec);
        log.records.push(rec);
    }
    Ok((model, log))
}

impl TranslatorModel {
    /// Runs one generator in inference mode over an `[n, 1, s, s]` batch.
    pub fn generate(&self, direction: Direction, batch: &Tensor) -> Tensor {
        let params = match direction {
            Direction::AToB => &self.gen_ab,
            Direction::BToA => &self.gen_ba,
        };
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false).vars;
        let x = g.constant(batch.clone());
        let y = generator::forward(&mut g, &vars, self.config.n_residual_blocks, x);
        g.value(y).clone()
    }

    /// Patch scores of one discriminator.
    pub fn discriminate(&self, domain_b: bool, batch: &Tensor) -> Tensor {
        let params = if domain_b { &self.disc_b } else { &self.disc_a };
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false).vars;
        let x = g.constant(batch.clone());
        let y = discriminator::forward(&mut g, &vars, x);
        g.value(y).clone()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut all = ParamSet::new();
        for (prefix, ps) in [
            ("gen_ab", &self.gen_ab),
            ("gen_ba", &self.gen_ba),
            ("disc_a", &self.disc_a),
            ("disc_b", &self.disc_b),
        ] {
            for (name, t) in ps.iter() {
                all.push(format!("{prefix}.{name}"), t.clone());
            }
        }
        save_checkpoint(dir, "translator", serde_json::to_value(&self.config)?, self.image_size, self.step_count, &all)
    }

    /// Loads a checkpoint; parameters come back rounded to `f32`.
    pub fn load(dir: &Path) -> Result<TranslatorModel> {
        let (manifest, all) = load_checkpoint(dir, "translator")?;
        let config: TranslatorConfig = serde_json::from_value(manifest.config)?;
        let mut model = init_translator(&config, manifest.image_size)?;
        for (prefix, ps) in [
            ("gen_ab", &mut model.gen_ab),
            ("gen_ba", &mut model.gen_ba),
            ("disc_a", &mut model.disc_a),
            ("disc_b", &mut model.disc_b),
        ] {
            let mut loaded = ParamSet::new();
            for (name, t) in ps.iter() {
                let key = format!("{prefix}.{name}");
                let src = all
                    .get(&key)
                    .ok_or_else(|| Error::format(dir, format!("missing tensor {key}")))?;
                if src.shape() != t.shape() {
                    return Err(Error::format(dir, format!("tensor {key} has shape {:?}, expected {:?}", src.shape(), t.shape())));
                }
                loaded.push(name, src.clone());
            }
            *ps = loaded;
        }
        model.step_count = manifest.step_count;
        Ok(model)
    }
}

/// Translates every sample of `ds` with one generator. Ids gain the
/// `~syn` suffix; labels and order are preserved; pixels are clamped and
/// quantised to 8 bits.
pub fn translate_dataset(model: &TranslatorModel, ds: &DomainDataset, direction: Direction) -> Result<DomainDataset> {
    if ds.image_size() != model.image_size {
        return Err(Error::Shape(format!(
            "dataset image_size {} does not match translator image_size {}",
            ds.image_size(),
            model.image_size
        )));
    }
    const CHUNK: usize = 16;
    let mut samples = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let out = model.generate(direction, &ds.batch(chunk));
        let plane = model.image_size * model.image_size;
        for (k, &i) in chunk.iter().enumerate() {
            let src = &ds.samples()[i];
            samples.push(ImageSample {
                id: format!("{}{SYN_SUFFIX}", src.id),
                label: src.label,
                pixels: out.data()[k * plane..(k + 1) * plane].iter().map(|&p| quantize(p)).collect(),
                provenance: Provenance::SynthesizedFrom(ds.domain().to_string()),
            });
        }
    }
    DomainDataset::new(format!("{}{SYN_SUFFIX}", ds.domain()), ds.image_size(), samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lsgan_examples() {
        assert_eq!(lsgan_loss(&Tensor::full(&[1, 1, 2, 2], 1.0), true), 0.0);
        assert_eq!(lsgan_loss(&Tensor::full(&[1, 1, 2, 2], 0.0), true), 1.0);
        let s = Tensor::from_vec(&[2], vec![0.2, 0.8]);
        assert!((lsgan_loss(&s, false) - 0.34).abs() < 1e-15);
    }

    #[test]
    fn l1_examples() {
        let x = Tensor::full(&[1, 1, 3, 3], 0.3);
        assert_eq!(l1_mean(&x, &x).unwrap(), 0.0);
        assert_eq!(l1_mean(&Tensor::zeros(&[2, 2]), &Tensor::full(&[2, 2], 1.0)).unwrap(), 1.0);
        assert_eq!(l1_mean(&Tensor::full(&[4], 0.25), &Tensor::full(&[4], 0.75)).unwrap(), 0.5);
        assert!(l1_mean(&Tensor::zeros(&[2]), &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn init_rejects_bad_size_and_is_deterministic() {
        let cfg = TranslatorConfig {
            base_channels: 4,
            seed: 5,
            ..Default::default()
        };
        assert!(init_translator(&cfg, 30).is_err());
        assert_eq!(init_translator(&cfg, 16).unwrap(), init_translator(&cfg, 16).unwrap());
    }

    #[test]
    fn pool_disabled_passes_through() {
        let mut pool = ImagePool::new(0, 1);
        let t = Tensor::full(&[2, 1, 4, 4], 0.5);
        assert_eq!(pool.query(&t), t);
    }

    #[test]
    fn pool_returns_history_once_full() {
        let mut pool = ImagePool::new(2, 3);
        let mk = |v: f64| Tensor::full(&[1, 1, 2, 2], v);
        assert_eq!(pool.query(&mk(0.1)), mk(0.1));
        assert_eq!(pool.query(&mk(0.2)), mk(0.2));
        let mut saw_old = false;
        for i in 0..20 {
            let fresh = mk(0.3 + i as f64 * 0.01);
            if pool.query(&fresh) != fresh {
                saw_old = true;
            }
        }
        assert!(saw_old);
    }

    #[test]
    fn batch_stream_visits_everything_each_epoch() {
        let mut s = BatchStream::new(5, 9);
        let mut first: Vec<usize> = s.next_batch(5);
        first.sort();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
        let mut second = s.next_batch(5);
        second.sort();
        assert_eq!(second, vec![0, 1, 2, 3, 4]);
    }
}

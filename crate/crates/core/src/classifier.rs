//! Binary image classifiers trained with logistic loss, dataset mixing for
//! the adaptation route, and scoring.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Graph};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{DomainDataset, Label, Provenance};
use crate::error::{Error, Result};
use crate::networks::{mini_alexnet, mini_resnet};
use crate::params::{Adam, ParamSet};
use crate::seed::{derive_seed, rng_from, sha256_hex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    MiniAlexnet,
    MiniResnet,
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::MiniAlexnet, Arch::MiniResnet];

    pub fn name(self) -> &'static str {
        match self {
            Arch::MiniAlexnet => "mini_alexnet",
            Arch::MiniResnet => "mini_resnet",
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mini_alexnet" => Ok(Arch::MiniAlexnet),
            "mini_resnet" => Ok(Arch::MiniResnet),
            other => Err(Error::validation("arch", format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation(format!("{field}.batch_size"), "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::validation(format!("{field}.learning_rate"), "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub arch: Arch,
    pub params: ParamSet,
    pub image_size: usize,
}

impl ClassifierModel {
    pub fn init(arch: Arch, image_size: usize, seed: u64) -> Result<Self> {
        if image_size == 0 || image_size % 16 != 0 {
            return Err(Error::validation(
                "image_size",
                format!("{image_size} is not divisible by 16 (four 2x reductions)"),
            ));
        }
        let mut rng = rng_from(derive_seed(seed, &["classifier-init", arch.name()]));
        let params = match arch {
            Arch::MiniAlexnet => mini_alexnet::init(image_size, &mut rng),
            Arch::MiniResnet => mini_resnet::init(&mut rng),
        };
        Ok(ClassifierModel {
            arch,
            params,
            image_size,
        })
    }

    fn logits(&self, g: &mut Graph, vars: &[crate::autodiff::Var], x: crate::autodiff::Var) -> crate::autodiff::Var {
        match self.arch {
            Arch::MiniAlexnet => mini_alexnet::forward(g, vars, x),
            Arch::MiniResnet => mini_resnet::forward(g, vars, x),
        }
    }

    pub fn save(&self, dir: &Path, spec: &TrainSpec) -> Result<()> {
        let config = serde_json::json!({ "arch": self.arch, "train_spec": spec });
        save_checkpoint(dir, "classifier", config, self.image_size, spec.epochs, &self.params)
    }

    pub fn load(dir: &Path) -> Result<ClassifierModel> {
        let (manifest, params) = load_checkpoint(dir, "classifier")?;
        let arch: Arch = serde_json::from_value(manifest.config["arch"].clone())?;
        let template = ClassifierModel::init(arch, manifest.image_size, 0)?;
        let same_layout = template.params.len() == params.len()
            && template
                .params
                .iter()
                .zip(params.iter())
                .all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
        if !same_layout {
            return Err(Error::format(dir, format!("parameter layout does not match {arch}")));
        }
        Ok(ClassifierModel {
            arch,
            params,
            image_size: manifest.image_size,
        })
    }
}

/// Concatenates the source set with its translations, then orders the
/// union by a hash of each id. Labels are untouched.
pub fn mix_datasets(source_train: &DomainDataset, synthesized: &DomainDataset) -> Result<DomainDataset> {
    mix_datasets_with_ratio(source_train, synthesized, 1.0)
}

/// Like [`mix_datasets`] but keeps only the first `ceil(ratio × |synthesized|)`
/// translations (in hashed order). `ratio = 1` keeps all of them.
pub fn mix_datasets_with_ratio(source_train: &DomainDataset, synthesized: &DomainDataset, ratio: f64) -> Result<DomainDataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::validation("mix_ratio", "must lie in [0, 1]"));
    }
    if !synthesized.is_empty() && source_train.image_size() != synthesized.image_size() {
        return Err(Error::Shape(format!(
            "image sizes differ: {} vs {}",
            source_train.image_size(),
            synthesized.image_size()
        )));
    }
    if let Some(s) = synthesized
        .samples()
        .iter()
        .find(|s| !matches!(s.provenance, Provenance::SynthesizedFrom(_)))
    {
        return Err(Error::validation("synthesized", format!("sample {} is not a translation", s.id)));
    }
    let key = |id: &str| sha256_hex(id.as_bytes());
    let mut synth: Vec<_> = synthesized.samples().to_vec();
    synth.sort_by_cached_key(|s| key(&s.id));
    synth.truncate((ratio * synth.len() as f64).ceil() as usize);
    let mut all: Vec<_> = source_train.samples().to_vec();
    all.extend(synth);
    all.sort_by_cached_key(|s| key(&s.id));
    DomainDataset::new(source_train.domain(), source_train.image_size(), all)
}

/// Trains `arch` on `train_set` with mini-batch Adam on logistic loss.
pub fn train_classifier(train_set: &DomainDataset, arch: Arch, spec: &TrainSpec) -> Result<ClassifierModel> {
    train_classifier_with(train_set, arch, spec, |_, _| {})
}

/// [`train_classifier`] with a per-epoch callback receiving the mean loss.
pub fn train_classifier_with(
    train_set: &DomainDataset,
    arch: Arch,
    spec: &TrainSpec,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<ClassifierModel> {
    spec.validate("train_spec")?;
    if train_set.is_empty() {
        return Err(Error::validation("train_set", "dataset is empty"));
    }
    if train_set.count(Label::Positive) == 0 || train_set.count(Label::Negative) == 0 {
        return Err(Error::validation("train_set", "both classes must be present"));
    }
    let mut model = ClassifierModel::init(arch, train_set.image_size(), spec.seed)?;
    let mut opt = Adam::new(&model.params, spec.learning_rate, 0.9);
    let mut rng = rng_from(derive_seed(spec.seed, &["classifier-batches", arch.name()]));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=spec.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(spec.batch_size) {
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g, true);
            let x = g.constant(train_set.batch(chunk));
            let z = model.logits(&mut g, &bound.vars, x);
            let targets = chunk.iter().map(|&i| train_set.samples()[i].label.as_target()).collect();
            let loss = g.bce_with_logits(z, targets);
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    step: epoch,
                    component: "classifier loss (epoch)".into(),
                });
            }
            loss_sum += value * chunk.len() as f64;
            let mut grads = g.backward(loss);
            let grads = model.params.collect_grads(&bound, &mut grads);
            opt.step(&mut model.params, &grads);
        }
        if !model.params.all_finite() {
            return Err(Error::NonFinite {
                step: epoch,
                component: "classifier parameters (epoch)".into(),
            });
        }
        on_epoch(epoch, loss_sum / train_set.len() as f64);
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub id: String,
    pub true_label: Label,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub rows: Vec<ScoreRow>,
    pub arch: Option<Arch>,
    pub test_domain: String,
}

impl ScoredSet {
    pub fn new(rows: Vec<ScoreRow>, arch: Option<Arch>, test_domain: impl Into<String>) -> Self {
        ScoredSet {
            rows,
            arch,
            test_domain: test_domain.into(),
        }
    }

    /// Builds an unlabelled-metadata set from `(is_positive, score)` pairs.
    pub fn from_pairs(pairs: &[(bool, f64)]) -> Self {
        let rows = pairs
            .iter()
            .enumerate()
            .map(|(i, &(pos, score))| ScoreRow {
                id: format!("s{i:06}"),
                true_label: if pos { Label::Positive } else { Label::Negative },
                score,
            })
            .collect();
        ScoredSet::new(rows, None, "")
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positive_scores(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.true_label.is_positive()).map(|r| r.score).collect()
    }

    pub fn negative_scores(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| !r.true_label.is_positive()).map(|r| r.score).collect()
    }

    /// Score lookup by id.
    pub fn by_id(&self) -> HashMap<&str, f64> {
        self.rows.iter().map(|r| (r.id.as_str(), r.score)).collect()
    }

    /// `id,true_label,score` with a header; scores to 9 decimals. Missing
    /// parent directories are created.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("id,true_label,score\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.9}\n", r.id, u8::from(r.true_label.is_positive()), r.score));
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<ScoredSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some("id,true_label,score") {
            return Err(Error::format(path, "missing header id,true_label,score"));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || Error::format(path, format!("malformed row {}: {line:?}", n + 2));
            let mut parts = line.split(',');
            let (Some(id), Some(label), Some(score), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
                return Err(bad());
            };
            let true_label = match label {
                "1" => Label::Positive,
                "0" => Label::Negative,
                _ => return Err(bad()),
            };
            let score: f64 = score.parse().map_err(|_| bad())?;
            rows.push(ScoreRow {
                id: id.to_string(),
                true_label,
                score,
            });
        }
        Ok(ScoredSet::new(rows, None, ""))
    }
}

/// Scores every sample of `test_set` in order, in inference mode.
pub fn predict_scores(model: &ClassifierModel, test_set: &DomainDataset) -> Result<ScoredSet> {
    if test_set.image_size() != model.image_size {
        return Err(Error::Shape(format!(
            "test image_size {} does not match classifier image_size {}",
            test_set.image_size(),
            model.image_size
        )));
    }
    const CHUNK: usize = 32;
    let mut rows = Vec::with_capacity(test_set.len());
    let indices: Vec<usize> = (0..test_set.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g, false);
        let x = g.constant(test_set.batch(chunk));
        let z = model.logits(&mut g, &bound.vars, x);
        for (k, &i) in chunk.iter().enumerate() {
            let s = &test_set.samples()[i];
            rows.push(ScoreRow {
                id: s.id.clone(),
                true_label: s.label,
                score: sigmoid(g.value(z).data()[k]),
            });
        }
    }
    Ok(ScoredSet::new(rows, Some(model.arch), test_set.domain()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageSample;

    fn toy(n: usize, size: usize) -> DomainDataset {
        let samples = (0..2 * n)
            .map(|i| {
                let pos = i % 2 == 0;
                ImageSample {
                    id: format!("t{i:03}"),
                    label: if pos { Label::Positive } else { Label::Negative },
                    pixels: vec![if pos { 0.9 } else { 0.1 }; size * size],
                    provenance: Provenance::Real,
                }
            })
            .collect();
        DomainDataset::new("T", size, samples).unwrap()
    }

    #[test]
    fn rejects_single_class_and_bad_size() {
        let ds = toy(3, 16);
        let pos_only: Vec<_> = ds.samples().iter().filter(|s| s.label.is_positive()).cloned().collect();
        let pos_only = DomainDataset::new("T", 16, pos_only).unwrap();
        let err = train_classifier(&pos_only, Arch::MiniAlexnet, &TrainSpec::default()).unwrap_err();
        assert!(err.is_validation());
        assert!(ClassifierModel::init(Arch::MiniResnet, 20, 0).is_err());
    }

    #[test]
    fn zero_epochs_gives_valid_scorer() {
        let ds = toy(3, 16);
        let spec = TrainSpec {
            epochs: 0,
            ..Default::default()
        };
        for arch in Arch::ALL {
            let m = train_classifier(&ds, arch, &spec).unwrap();
            assert_eq!(m, ClassifierModel::init(arch, 16, 0).unwrap());
            let s = predict_scores(&m, &ds).unwrap();
            assert_eq!(s.len(), ds.len());
            assert!(s.rows.iter().all(|r| (0.0..=1.0).contains(&r.score)));
        }
    }

    #[test]
    fn mix_requires_translations() {
        let ds = toy(2, 16);
        assert!(mix_datasets(&ds, &ds).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = ScoredSet::from_pairs(&[(true, 0.25), (false, 0.123456789)]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        let back = ScoredSet::read_csv(&p).unwrap();
        assert_eq!(back.rows, s.rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("s000000,1,0.250000000"));
    }
}

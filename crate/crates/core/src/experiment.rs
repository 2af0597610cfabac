//! The full study: baseline and UDA classifiers for both domain directions,
//! every architecture and `n_runs` seeds, persisted under one output
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::classifier::{
    mix_datasets_with_ratio, predict_scores, train_classifier, Arch, ClassifierModel, ScoredSet, TrainSpec,
};
use crate::data::{generate_synthetic_pair, split_dataset, DomainDataset, GenConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    bootstrap_auc_ci, build_table, multi_run_ci, roc_auc, CellResult, CiMode, ExperimentReport, Method,
    ReportMetadata,
};
use crate::seed::{derive_seed, sha256_hex};
use crate::store::{load_dataset, save_dataset, set_generator_hash, Part};
use crate::translator::{train_translator, translate_dataset, Direction, TranslatorConfig, TranslatorModel};

pub const CONFIG_FORMAT_VERSION: &str = "1";

/// Domain tags produced by the synthetic generator.
pub const DOMAINS: [&str; 2] = ["A", "B"];

/// One [`TrainSpec`] per classifier preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierSpecs {
    pub mini_alexnet: TrainSpec,
    pub mini_resnet: TrainSpec,
}

impl Default for ClassifierSpecs {
    fn default() -> Self {
        ClassifierSpecs {
            mini_alexnet: TrainSpec::default(),
            mini_resnet: TrainSpec::default(),
        }
    }
}

impl ClassifierSpecs {
    pub fn get(&self, arch: Arch) -> &TrainSpec {
        match arch {
            Arch::MiniAlexnet => &self.mini_alexnet,
            Arch::MiniResnet => &self.mini_resnet,
        }
    }
}

/// Everything that determines an experiment. `output_dir`, `data_dir` and
/// `threads` affect where and how fast it runs, not what it computes, so they
/// are left out of the config hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: String,
    pub gen: GenConfig,
    pub train_fraction: f64,
    pub translator: TranslatorConfig,
    pub classifiers: ClassifierSpecs,
    pub archs: Vec<Arch>,
    pub n_runs: usize,
    pub ci_mode: CiMode,
    pub alpha: f64,
    pub n_boot: usize,
    /// Fraction of the translated source set mixed into UDA training.
    pub mix_ratio: f64,
    pub global_seed: u64,
    pub output_dir: PathBuf,
    /// Load datasets written by `gen-data` instead of generating them.
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION.into(),
            gen: GenConfig::default(),
            train_fraction: 0.8,
            translator: TranslatorConfig::default(),
            classifiers: ClassifierSpecs::default(),
            archs: Arch::ALL.to_vec(),
            n_runs: 3,
            ci_mode: CiMode::MultiRun,
            alpha: 0.05,
            n_boot: 1000,
            mix_ratio: 1.0,
            global_seed: 2024,
            output_dir: PathBuf::from("runs/default"),
            data_dir: None,
            threads: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(Error::validation(
                "format_version",
                format!("unsupported version {:?}, expected {CONFIG_FORMAT_VERSION:?}", self.format_version),
            ));
        }
        self.gen.validate()?;
        if self.gen.image_size % 16 != 0 {
            return Err(Error::validation("gen.image_size", "must be divisible by 16"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::validation("train_fraction", "must lie strictly between 0 and 1"));
        }
        self.translator.validate()?;
        self.classifiers.mini_alexnet.validate("classifiers.mini_alexnet")?;
        self.classifiers.mini_resnet.validate("classifiers.mini_resnet")?;
        if self.archs.is_empty() {
            return Err(Error::validation("archs", "must name at least one architecture"));
        }
        for (i, a) in self.archs.iter().enumerate() {
            if self.archs[..i].contains(a) {
                return Err(Error::validation("archs", format!("{a} listed twice")));
            }
        }
        if self.n_runs < 1 {
            return Err(Error::validation("n_runs", "must be at least 1"));
        }
        if self.ci_mode == CiMode::MultiRun && self.n_runs < 2 {
            return Err(Error::validation("n_runs", "multi_run intervals need at least 2 runs"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::validation("alpha", "must lie strictly between 0 and 1"));
        }
        if self.ci_mode == CiMode::Bootstrap && self.n_boot < 100 {
            return Err(Error::validation("n_boot", "must be at least 100"));
        }
        if !(self.mix_ratio > 0.0 && self.mix_ratio <= 1.0) {
            return Err(Error::validation("mix_ratio", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Parses and validates a config document.
    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_value(v).map_err(|e| Error::validation("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, without the location fields.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("output_dir");
            map.remove("data_dir");
            map.remove("threads");
        }
        sha256_hex(v.to_string().as_bytes())
    }
}

/// Reads a config file into a JSON value (overrides are applied before parsing).
pub fn read_config_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Applies a `dotted.key=value` override. The value is parsed as JSON when
/// possible and kept as a string otherwise, so `n_runs=5`, `ci_mode=bootstrap`
/// and `archs=["mini_resnet"]` all work.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::validation("--set", format!("expected key=value, got {assignment:?}")))?;
    if key.is_empty() {
        return Err(Error::validation("--set", "empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::validation(key, format!("{:?} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Train and test halves of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSplit {
    pub train: DomainDataset,
    pub test: DomainDataset,
}

impl DomainSplit {
    pub fn domain(&self) -> &str {
        self.train.domain()
    }
}

/// Generates both domains and splits them with seeds derived from `global_seed`.
pub fn generate_splits(cfg: &ExperimentConfig) -> Result<Vec<DomainSplit>> {
    let (a, b) = generate_synthetic_pair(&cfg.gen)?;
    [a, b]
        .iter()
        .map(|ds| {
            let seed = derive_seed(cfg.global_seed, &["split", ds.domain()]);
            let (train, test) = split_dataset(ds, cfg.train_fraction, seed)?;
            Ok(DomainSplit { train, test })
        })
        .collect()
}

/// Hash of the generator config recorded in dataset manifests.
pub fn generator_hash(cfg: &ExperimentConfig) -> String {
    let v = serde_json::json!({ "gen": cfg.gen, "train_fraction": cfg.train_fraction, "global_seed": cfg.global_seed });
    sha256_hex(v.to_string().as_bytes())
}

pub fn save_splits(splits: &[DomainSplit], root: &Path, gen_hash: &str) -> Result<()> {
    for s in splits {
        save_dataset(&s.train, root, Part::Train)?;
        save_dataset(&s.test, root, Part::Test)?;
    }
    set_generator_hash(root, gen_hash)
}

pub fn load_splits(root: &Path) -> Result<Vec<DomainSplit>> {
    DOMAINS
        .iter()
        .map(|d| {
            Ok(DomainSplit {
                train: load_dataset(root, d, Part::Train)?,
                test: load_dataset(root, d, Part::Test)?,
            })
        })
        .collect()
}

/// Scores on the source test set and the target test set, in that order.
pub type ScoredPair = (ScoredSet, ScoredSet);

fn score_both(model: &ClassifierModel, source: &DomainSplit, target: &DomainSplit) -> Result<ScoredPair> {
    Ok((predict_scores(model, &source.test)?, predict_scores(model, &target.test)?))
}

fn seeded(spec: &TrainSpec, seed: u64) -> TrainSpec {
    TrainSpec { seed, ..spec.clone() }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name.to_string(),
        source: Box::new(e),
    })
}

/// Trains on the source training split only and scores both test splits.
pub fn run_baseline(
    source: &DomainSplit,
    target: &DomainSplit,
    arch: Arch,
    spec: &TrainSpec,
    seed: u64,
) -> Result<ScoredPair> {
    let model = baseline_model(source, arch, spec, seed)?;
    stage("score", score_both(&model, source, target))
}

fn baseline_model(source: &DomainSplit, arch: Arch, spec: &TrainSpec, seed: u64) -> Result<ClassifierModel> {
    stage("train_classifier", train_classifier(&source.train, arch, &seeded(spec, seed)))
}

/// The full UDA pipeline for one cell: a translator trained on the two
/// unlabeled training splits, translation of the source training split,
/// mixing, classifier training and scoring.
pub fn run_uda(
    source: &DomainSplit,
    target: &DomainSplit,
    arch: Arch,
    translator_cfg: &TranslatorConfig,
    spec: &TrainSpec,
    seed: u64,
) -> Result<ScoredPair> {
    let tcfg = TranslatorConfig {
        seed: derive_seed(seed, &["translator"]),
        ..translator_cfg.clone()
    };
    let (translator, _) = stage("train_translator", train_translator(&source.train, &target.train, &tcfg))?;
    let model = uda_model(&translator, Direction::AToB, source, arch, spec, seed, 1.0)?;
    stage("score", score_both(&model, source, target))
}

fn uda_model(
    translator: &TranslatorModel,
    direction: Direction,
    source: &DomainSplit,
    arch: Arch,
    spec: &TrainSpec,
    seed: u64,
    mix_ratio: f64,
) -> Result<ClassifierModel> {
    let synthesized = stage("translate", translate_dataset(translator, &source.train, direction))?;
    let mixed = stage("mix", mix_datasets_with_ratio(&source.train, &synthesized, mix_ratio))?;
    stage("train_classifier", train_classifier(&mixed, arch, &seeded(spec, seed)))
}

/// Seed of one (training domain, arch, method, run) cell.
pub fn cell_seed(global_seed: u64, train_domain: &str, arch: Arch, method: Method, run: usize) -> u64 {
    derive_seed(global_seed, &[train_domain, arch.name(), method.name(), &run.to_string()])
}

/// Seed of the translator shared by every UDA cell of one run.
pub fn translator_seed(global_seed: u64, run: usize) -> u64 {
    derive_seed(global_seed, &["translator", &run.to_string()])
}

/// Paths written by [`run_matrix`], relative to `output_dir`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub datasets: String,
    pub translator_checkpoints: Vec<String>,
    pub classifier_checkpoints: Vec<String>,
    pub scored_sets: Vec<String>,
    pub report: String,
    pub report_csv: Option<String>,
    pub table: Option<String>,
}

/// `manifest.json` at the root of `output_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub elapsed_seconds: f64,
    pub complete: bool,
    pub artifacts: RunArtifacts,
}

#[derive(Clone, Debug)]
struct Job {
    train: usize,
    arch: Arch,
    method: Method,
    run: usize,
}

impl Job {
    fn tag(&self, domains: &[String]) -> String {
        format!("{}_{}_{}_run{}", domains[self.train], self.arch.name(), self.method.name(), self.run)
    }
}

/// Runs `f` over `items` on up to `threads` workers; results keep item order.
fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = threads.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Outcome of [`run_matrix`]. An incomplete report still lists every cell
/// whose runs all succeeded.
#[derive(Clone, Debug)]
pub struct MatrixOutcome {
    pub report: ExperimentReport,
    pub manifest: RunManifest,
}

/// Runs the whole study and writes every artifact under `cfg.output_dir`.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixOutcome> {
    run_matrix_with(cfg, |_| {})
}

/// [`run_matrix`] with a progress callback receiving one line per event.
pub fn run_matrix_with(cfg: &ExperimentConfig, log: impl Fn(&str) + Sync) -> Result<MatrixOutcome> {
    cfg.validate()?;
    let started = unix_now();
    let clock = Instant::now();
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let threads = if cfg.threads == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        cfg.threads
    };

    let splits = match &cfg.data_dir {
        Some(dir) => {
            log(&format!("loading datasets from {}", dir.display()));
            load_splits(dir)?
        }
        None => {
            log("generating datasets");
            generate_splits(cfg)?
        }
    };
    for s in &splits {
        if s.train.image_size() != cfg.gen.image_size {
            return Err(Error::validation(
                "gen.image_size",
                format!("config says {} but dataset {} has {}", cfg.gen.image_size, s.domain(), s.train.image_size()),
            ));
        }
    }
    let datasets_dir = out.join("datasets");
    save_splits(&splits, &datasets_dir, &generator_hash(cfg))?;
    let domains: Vec<String> = splits.iter().map(|s| s.domain().to_string()).collect();

    let mut artifacts = RunArtifacts {
        datasets: rel(&out, &datasets_dir),
        ..Default::default()
    };
    let mut failures: Vec<String> = Vec::new();

    // One translator per run serves both directions: gen_ab translates A
    // sources, gen_ba translates B sources.
    let runs: Vec<usize> = (0..cfg.n_runs).collect();
    let translators: Vec<std::result::Result<TranslatorModel, String>> = parallel_map(&runs, threads, |&run| {
        let tcfg = TranslatorConfig {
            seed: translator_seed(cfg.global_seed, run),
            ..cfg.translator.clone()
        };
        let t = Instant::now();
        let res = stage("train_translator", train_translator(&splits[0].train, &splits[1].train, &tcfg))
            .and_then(|(model, _)| {
                let dir = out.join("checkpoints").join(format!("translator_run{run}"));
                model.save(&dir)?;
                Ok(model)
            })
            .map_err(|e| format!("translator run {run}: {e}"));
        log(&format!("translator run {run} finished in {:.1}s", t.elapsed().as_secs_f64()));
        res
    });
    for (run, t) in translators.iter().enumerate() {
        match t {
            Ok(_) => artifacts.translator_checkpoints.push(format!("checkpoints/translator_run{run}")),
            Err(e) => failures.push(e.clone()),
        }
    }

    let mut jobs = Vec::new();
    for train in 0..splits.len() {
        for &arch in &cfg.archs {
            for method in Method::ALL {
                for run in 0..cfg.n_runs {
                    jobs.push(Job { train, arch, method, run });
                }
            }
        }
    }
    let results: Vec<std::result::Result<ScoredPair, String>> = parallel_map(&jobs, threads, |job| {
        let tag = job.tag(&domains);
        let source = &splits[job.train];
        let target = &splits[1 - job.train];
        let spec = cfg.classifiers.get(job.arch);
        let seed = cell_seed(cfg.global_seed, source.domain(), job.arch, job.method, job.run);
        let t = Instant::now();
        let model = match job.method {
            Method::Baseline => baseline_model(source, job.arch, spec, seed),
            Method::Uda => match &translators[job.run] {
                Ok(tr) => {
                    let direction = if job.train == 0 { Direction::AToB } else { Direction::BToA };
                    uda_model(tr, direction, source, job.arch, spec, seed, cfg.mix_ratio)
                }
                Err(_) => Err(Error::Stage {
                    stage: "train_translator".into(),
                    source: Box::new(Error::Metric(format!("translator for run {} is unavailable", job.run))),
                }),
            },
        };
        let res = model
            .and_then(|m| {
                m.save(&out.join("checkpoints").join(format!("classifier_{tag}")), &seeded(spec, seed))?;
                stage("score", score_both(&m, source, target))
            })
            .and_then(|(on_source, on_target)| {
                for s in [&on_source, &on_target] {
                    let name = score_file_name(source.domain(), job.arch, job.method, job.run, &s.test_domain);
                    s.write_csv(&out.join("scores").join(name))?;
                }
                Ok((on_source, on_target))
            })
            .map_err(|e| format!("{tag}: {e}"));
        log(&format!(
            "{tag} {} in {:.1}s",
            if res.is_ok() { "done" } else { "FAILED" },
            t.elapsed().as_secs_f64()
        ));
        res
    });

    // (train, test, arch, method) -> per-run scored sets
    let mut grouped = Grouped::new();
    for (job, res) in jobs.iter().zip(results) {
        let tag = job.tag(&domains);
        let (own, other) = match res {
            Ok((a, b)) => {
                artifacts.classifier_checkpoints.push(format!("checkpoints/classifier_{tag}"));
                for s in [&a, &b] {
                    let name = score_file_name(&domains[job.train], job.arch, job.method, job.run, &s.test_domain);
                    artifacts.scored_sets.push(format!("scores/{name}"));
                }
                (Some(a), Some(b))
            }
            Err(e) => {
                failures.push(e);
                (None, None)
            }
        };
        let test_other = 1 - job.train;
        grouped
            .entry((job.train, job.train, job.arch, job.method))
            .or_default()
            .push(own);
        grouped
            .entry((job.train, test_other, job.arch, job.method))
            .or_default()
            .push(other);
    }

    let report = assemble_report(cfg, &domains, &grouped, failures);
    let (report_csv, table) = write_report_files(&out, &report)?;
    artifacts.report = "report.json".into();
    artifacts.report_csv = report_csv;
    artifacts.table = table;
    for f in &report.metadata.failures {
        log(&format!("failure: {f}"));
    }

    let manifest = RunManifest {
        format_version: CONFIG_FORMAT_VERSION.into(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        started_unix: started,
        finished_unix: unix_now(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        complete: report.metadata.complete,
        artifacts,
    };
    write_file(&out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    Ok(MatrixOutcome { report, manifest })
}

/// Per-run scored sets keyed by (train domain index, test domain index, arch,
/// method); `None` marks a failed run.
type Grouped = BTreeMap<(usize, usize, Arch, Method), Vec<Option<ScoredSet>>>;

fn assemble_report(cfg: &ExperimentConfig, domains: &[String], grouped: &Grouped, mut failures: Vec<String>) -> ExperimentReport {
    let mut cells = Vec::new();
    for ((train, test, arch, method), sets) in grouped {
        let Some(sets) = sets.iter().cloned().collect::<Option<Vec<ScoredSet>>>() else {
            continue;
        };
        match summarize(cfg, &sets, &domains[*train], &domains[*test], *arch, *method) {
            Ok(cell) => cells.push(cell),
            Err(e) => failures.push(format!(
                "cell ({}, {}, {}, {}): {e}",
                domains[*train],
                domains[*test],
                arch.name(),
                method.name()
            )),
        }
    }
    let mut report = ExperimentReport {
        metadata: ReportMetadata {
            global_seed: cfg.global_seed,
            config_hash: cfg.hash(),
            timestamp: None,
            ci_mode: cfg.ci_mode,
            domains: domains.to_vec(),
            archs: cfg.archs.iter().map(|a| a.name().to_string()).collect(),
            complete: false,
            failures: Vec::new(),
        },
        cells,
    };
    report.metadata.complete = failures.is_empty() && report.missing_keys().is_empty();
    report.metadata.failures = failures;
    report
}

/// Writes `report.json`, plus `report.csv` and `table.txt` when the report
/// is complete. Returns the names of the optional files written.
pub fn write_report_files(out: &Path, report: &ExperimentReport) -> Result<(Option<String>, Option<String>)> {
    write_file(&out.join("report.json"), &report.to_json()?)?;
    if !report.metadata.complete {
        return Ok((None, None));
    }
    let table = build_table(report)?;
    write_file(&out.join("report.csv"), &table.csv)?;
    write_file(&out.join("table.txt"), &table.text)?;
    Ok((Some("report.csv".into()), Some("table.txt".into())))
}

/// File name of one persisted scored set.
pub fn score_file_name(train: &str, arch: Arch, method: Method, run: usize, test: &str) -> String {
    format!("{train}_{}_{}_run{run}_on_{test}.csv", arch.name(), method.name())
}

/// Rebuilds the report from the scored sets under `<output_dir>/scores`.
/// Missing or unreadable files are listed as failures.
pub fn report_from_scores(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dir = cfg.output_dir.join("scores");
    if !dir.is_dir() {
        return Err(Error::format(&dir, "no scores directory; run the matrix or score first"));
    }
    let domains: Vec<String> = DOMAINS.iter().map(|d| d.to_string()).collect();
    let mut grouped = Grouped::new();
    let mut failures = Vec::new();
    for train in 0..domains.len() {
        for &arch in &cfg.archs {
            for method in Method::ALL {
                for run in 0..cfg.n_runs {
                    for test in 0..domains.len() {
                        let path = dir.join(score_file_name(&domains[train], arch, method, run, &domains[test]));
                        let set = match ScoredSet::read_csv(&path) {
                            Ok(s) => Some(s),
                            Err(e) => {
                                failures.push(e.to_string());
                                None
                            }
                        };
                        grouped.entry((train, test, arch, method)).or_default().push(set);
                    }
                }
            }
        }
    }
    Ok(assemble_report(cfg, &domains, &grouped, failures))
}

/// Per-run auROCs and the configured interval for one report cell.
fn summarize(
    cfg: &ExperimentConfig,
    sets: &[ScoredSet],
    train: &str,
    test: &str,
    arch: Arch,
    method: Method,
) -> Result<CellResult> {
    let aucs = sets.iter().map(roc_auc).collect::<Result<Vec<f64>>>()?;
    let halfwidth = match cfg.ci_mode {
        CiMode::MultiRun => multi_run_ci(&aucs, cfg.alpha)?.1,
        CiMode::Bootstrap => {
            let mut total = 0.0;
            for (run, s) in sets.iter().enumerate() {
                let seed = derive_seed(
                    cell_seed(cfg.global_seed, train, arch, method, run),
                    &["bootstrap", test],
                );
                let (_, lo, hi) = bootstrap_auc_ci(s, cfg.n_boot, seed, cfg.alpha)?;
                total += (hi - lo) / 2.0;
            }
            total / sets.len() as f64
        }
    };
    Ok(CellResult::new(train, test, arch.name(), method, &aucs, halfwidth))
}

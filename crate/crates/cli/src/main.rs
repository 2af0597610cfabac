//! `uda`: command-line driver for the domain adaptation study.
//!
//! Exit codes: 0 success, 1 invalid configuration or usage, 2 runtime failure
//! (including an incomplete results matrix).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use uda_core::classifier::{
    mix_datasets_with_ratio, predict_scores, train_classifier_with, Arch, ClassifierModel, TrainSpec,
};
use uda_core::data::SYN_SUFFIX;
use uda_core::experiment::{
    apply_override, generate_splits, generator_hash, load_splits, read_config_value, report_from_scores,
    run_matrix_with, save_splits, translator_seed, write_report_files, DomainSplit, ExperimentConfig,
};
use uda_core::metrics::{build_table, Method};
use uda_core::store::{load_dataset, save_dataset, Part};
use uda_core::translator::{translate_dataset, train_translator_with, Direction, TranslatorConfig, TranslatorModel};

#[derive(Parser)]
#[command(name = "uda", version, about = "Cycle-GAN domain adaptation study on a synthetic two-domain benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set n_runs=5` or `--set translator.steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Override global_seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate both domains, split them and write them to <output_dir>/datasets.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Write here instead of <output_dir>/datasets.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a translator on the A and B training splits.
    TrainTranslator {
        #[command(flatten)]
        common: Common,
        /// Dataset root (defaults to data_dir, else freshly generated data).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Checkpoint directory.
        #[arg(long)]
        out: PathBuf,
        /// Run index used to derive the translator seed.
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Translate one domain split with a trained translator.
    Translate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Source domain to translate (A or B).
        #[arg(long)]
        domain: String,
        #[arg(long, default_value = "train")]
        part: String,
        /// Output dataset root; the result is stored under domain `<domain>~syn`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on one domain, optionally mixed with translations.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Source domain (A or B).
        #[arg(long)]
        domain: String,
        #[arg(long)]
        arch: String,
        /// Dataset root holding `<domain>~syn/train` from `translate`; enables UDA training.
        #[arg(long)]
        synthetic: Option<PathBuf>,
        /// Classifier seed (defaults to the arch's configured seed).
        #[arg(long)]
        train_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a dataset split with a trained classifier and write a CSV.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        domain: String,
        #[arg(long, default_value = "test")]
        part: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild report.json, report.csv and table.txt from <output_dir>/scores.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full matrix: both directions, all archs, both methods, n_runs seeds.
    RunMatrix {
        #[command(flatten)]
        common: Common,
        /// Suppress progress lines on stderr.
        #[arg(long)]
        quiet: bool,
    },
}

/// Error carrying the intended exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let err = e.into();
        let validation = err
            .chain()
            .any(|c| c.downcast_ref::<uda_core::Error>().is_some_and(|e| e.is_validation()));
        Failure {
            code: if validation { 1 } else { 2 },
            err,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        err: anyhow::anyhow!(msg.into()),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut doc = match &common.config {
        Some(path) => read_config_value(path).map_err(|e| usage(format!("cannot read config: {e}")))?,
        None => serde_json::to_value(ExperimentConfig::default())?,
    };
    for o in &common.overrides {
        apply_override(&mut doc, o)?;
    }
    if let Some(seed) = common.seed {
        doc["global_seed"] = seed.into();
    }
    Ok(ExperimentConfig::from_value(doc)?)
}

fn splits_for(cfg: &ExperimentConfig, data: Option<&Path>) -> anyhow::Result<Vec<DomainSplit>> {
    match data.or(cfg.data_dir.as_deref()) {
        Some(dir) => load_splits(dir).with_context(|| format!("loading datasets from {}", dir.display())),
        None => Ok(generate_splits(cfg)?),
    }
}

fn domain_index(domain: &str) -> Result<usize, Failure> {
    match domain {
        "A" => Ok(0),
        "B" => Ok(1),
        other => Err(usage(format!("unknown domain {other:?}; expected A or B"))),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { common, out } => {
            let cfg = load_config(&common)?;
            let root = out.unwrap_or_else(|| cfg.output_dir.join("datasets"));
            let splits = generate_splits(&cfg)?;
            save_splits(&splits, &root, &generator_hash(&cfg))?;
            for s in &splits {
                println!("{}: {} train, {} test", s.domain(), s.train.len(), s.test.len());
            }
            println!("wrote {}", root.display());
        }
        Command::TrainTranslator {
            common,
            data,
            out,
            run,
        } => {
            let cfg = load_config(&common)?;
            let splits = splits_for(&cfg, data.as_deref())?;
            let tcfg = TranslatorConfig {
                seed: translator_seed(cfg.global_seed, run),
                ..cfg.translator.clone()
            };
            let every = (tcfg.steps / 20).max(1);
            let (model, _) = train_translator_with(&splits[0].train, &splits[1].train, &tcfg, |r| {
                if r.step % every == 0 || r.step == tcfg.steps {
                    eprintln!(
                        "step {:>5}  gen {:.4}  disc_a {:.4}  disc_b {:.4}  cycle {:.4}",
                        r.step, r.gen_total, r.disc_a_loss, r.disc_b_loss, r.cyc_loss
                    );
                }
            })?;
            model.save(&out)?;
            println!("wrote {}", out.display());
        }
        Command::Translate {
            common,
            checkpoint,
            data,
            domain,
            part,
            out,
        } => {
            let cfg = load_config(&common)?;
            let idx = domain_index(&domain)?;
            let part: Part = part.parse()?;
            let splits = splits_for(&cfg, data.as_deref())?;
            let model = TranslatorModel::load(&checkpoint)?;
            let split = &splits[idx];
            let source = if part == Part::Train { &split.train } else { &split.test };
            let direction = if idx == 0 { Direction::AToB } else { Direction::BToA };
            let translated = translate_dataset(&model, source, direction)?;
            let dir = save_dataset(&translated, &out, part)?;
            println!("wrote {} translated samples to {}", translated.len(), dir.display());
        }
        Command::TrainClassifier {
            common,
            data,
            domain,
            arch,
            synthetic,
            train_seed,
            out,
        } => {
            let cfg = load_config(&common)?;
            let idx = domain_index(&domain)?;
            let arch: Arch = arch.parse()?;
            let splits = splits_for(&cfg, data.as_deref())?;
            let source = &splits[idx].train;
            let train_set = match &synthetic {
                Some(root) => {
                    let syn = load_dataset(root, &format!("{domain}{SYN_SUFFIX}"), Part::Train)?;
                    mix_datasets_with_ratio(source, &syn, cfg.mix_ratio)?
                }
                None => source.clone(),
            };
            let base = cfg.classifiers.get(arch);
            let spec = TrainSpec {
                seed: train_seed.unwrap_or(base.seed),
                ..base.clone()
            };
            let method = if synthetic.is_some() { Method::Uda } else { Method::Baseline };
            eprintln!("training {arch} ({}) on {} images", method.name(), train_set.len());
            let model = train_classifier_with(&train_set, arch, &spec, |epoch, loss| {
                eprintln!("epoch {epoch:>3}  loss {loss:.5}");
            })?;
            model.save(&out, &spec)?;
            println!("wrote {}", out.display());
        }
        Command::Score {
            common,
            checkpoint,
            data,
            domain,
            part,
            out,
        } => {
            let cfg = load_config(&common)?;
            let idx = domain_index(&domain)?;
            let part: Part = part.parse()?;
            let splits = splits_for(&cfg, data.as_deref())?;
            let model = ClassifierModel::load(&checkpoint)?;
            let split = &splits[idx];
            let set = if part == Part::Train { &split.train } else { &split.test };
            let scored = predict_scores(&model, set)?;
            scored.write_csv(&out)?;
            match uda_core::metrics::roc_auc(&scored) {
                Ok(auc) => println!("auROC {auc:.6} on {} {domain} images", scored.len()),
                Err(e) => println!("auROC unavailable: {e}"),
            }
        }
        Command::Report { common } => {
            let cfg = load_config(&common)?;
            let report = report_from_scores(&cfg)?;
            write_report_files(&cfg.output_dir, &report)?;
            if !report.metadata.complete {
                for f in &report.metadata.failures {
                    eprintln!("missing: {f}");
                }
                return Err(Failure {
                    code: 2,
                    err: anyhow::anyhow!("report is incomplete"),
                });
            }
            print!("{}", build_table(&report)?.text);
        }
        Command::RunMatrix { common, quiet } => {
            let cfg = load_config(&common)?;
            let outcome = run_matrix_with(&cfg, |line| {
                if !quiet {
                    eprintln!("{line}");
                }
            })?;
            if !outcome.report.metadata.complete {
                return Err(Failure {
                    code: 2,
                    err: anyhow::anyhow!(
                        "{} cell failure(s); partial report in {}",
                        outcome.report.metadata.failures.len(),
                        cfg.output_dir.join("report.json").display()
                    ),
                });
            }
            print!("{}", build_table(&outcome.report)?.text);
            println!("artifacts in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, err }) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}

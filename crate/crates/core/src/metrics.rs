//! auROC, confidence intervals and the results table.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classifier::ScoredSet;
use crate::error::{Error, Result};
use crate::seed::rng_from;

fn split_scores(scored: &ScoredSet) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(r) = scored.rows.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::Metric(format!("score for {} is not finite", r.id)));
    }
    let pos = scored.positive_scores();
    let neg = scored.negative_scores();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Metric(format!(
            "auROC undefined: {} positive and {} negative rows",
            pos.len(),
            neg.len()
        )));
    }
    Ok((pos, neg))
}

/// Mann–Whitney auROC from midranks: `(U_pos) / (n_pos · n_neg)` where tied
/// scores share the average of their ranks (equivalent to 0.5 credit per tie).
pub fn roc_auc(scored: &ScoredSet) -> Result<f64> {
    let (pos, neg) = split_scores(scored)?;
    Ok(auc_from_scores(&pos, &neg))
}

fn auc_from_scores(pos: &[f64], neg: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        let n_pos_in_run = all[i..=j].iter().filter(|e| e.1).count();
        rank_sum_pos += mid * n_pos_in_run as f64;
        i = j + 1;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn)
}

/// Independent auROC oracle: literal pairwise enumeration with 0.5 credit
/// for ties. Quadratic; meant for tests.
pub fn roc_auc_oracle(scored: &ScoredSet) -> Result<f64> {
    let (pos, neg) = split_scores(scored)?;
    let mut credit = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                credit += 1.0;
            } else if p == n {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (pos.len() as f64 * neg.len() as f64))
}

/// Two-sided standard normal quantile `z(1 − alpha/2)`.
pub fn z_critical(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Normal-approximation interval over independent runs:
/// `(mean, z(1−α/2) · s / √n)` with the `n−1` sample standard deviation.
pub fn multi_run_ci(per_run_auroc: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let n = per_run_auroc.len();
    if n < 2 {
        return Err(Error::Metric(format!("multi-run interval needs at least 2 runs, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation("alpha", "must lie in (0, 1)"));
    }
    let mut sorted = per_run_auroc.to_vec();
    // Sorting makes the summation order, and thus the result, permutation invariant.
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[n - 1] {
        return Ok((sorted[0], 0.0));
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, z_critical(alpha) * var.sqrt() / (n as f64).sqrt()))
}

/// Stratified percentile bootstrap of the auROC: positives and negatives are
/// resampled separately with replacement. Returns `(mean, lo, hi)` of the
/// bootstrap distribution.
pub fn bootstrap_auc_ci(scored: &ScoredSet, n_boot: usize, seed: u64, alpha: f64) -> Result<(f64, f64, f64)> {
    let (pos, neg) = split_scores(scored)?;
    if n_boot < 100 {
        return Err(Error::validation("n_boot", "must be at least 100"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::validation("alpha", "must lie in (0, 1)"));
    }
    let mut rng = rng_from(seed);
    let mut bp = vec![0.0; pos.len()];
    let mut bn = vec![0.0; neg.len()];
    let mut aucs: Vec<f64> = (0..n_boot)
        .map(|_| {
            bp.iter_mut().for_each(|v| *v = pos[rng.random_range(0..pos.len())]);
            bn.iter_mut().for_each(|v| *v = neg[rng.random_range(0..neg.len())]);
            auc_from_scores(&bp, &bn)
        })
        .collect();
    aucs.sort_by(f64::total_cmp);
    let mean = aucs.iter().sum::<f64>() / n_boot as f64;
    Ok((mean, percentile(&aucs, alpha / 2.0), percentile(&aucs, 1.0 - alpha / 2.0)))
}

/// Linear-interpolated percentile of sorted data, `q ∈ [0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Rounds to 9 decimals, the precision of every persisted number.
pub fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Baseline,
    Uda,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Baseline, Method::Uda];

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Uda => "uda",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Method::Baseline => "Baseline",
            Method::Uda => "UDA",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "uda" => Ok(Method::Uda),
            other => Err(Error::validation("method", format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMode {
    MultiRun,
    Bootstrap,
}

/// One table cell: mean auROC over runs with its interval half-width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub train_set: String,
    pub test_set: String,
    pub arch: String,
    pub method: Method,
    pub auroc_mean: f64,
    pub ci_halfwidth: f64,
    pub n_runs: usize,
    pub per_run_auroc: Vec<f64>,
}

impl CellResult {
    /// Builds a cell from per-run auROCs and a half-width; all numbers are
    /// rounded to 9 decimals.
    pub fn new(
        train_set: &str,
        test_set: &str,
        arch: &str,
        method: Method,
        per_run_auroc: &[f64],
        ci_halfwidth: f64,
    ) -> Self {
        let runs: Vec<f64> = per_run_auroc.iter().map(|&v| round9(v)).collect();
        let mean = round9(runs.iter().sum::<f64>() / runs.len().max(1) as f64);
        CellResult {
            train_set: train_set.into(),
            test_set: test_set.into(),
            arch: arch.into(),
            method,
            auroc_mean: mean,
            ci_halfwidth: round9(ci_halfwidth),
            n_runs: runs.len(),
            per_run_auroc: runs,
        }
    }

    fn key(&self) -> (String, String, String, Method) {
        (self.train_set.clone(), self.test_set.clone(), self.arch.clone(), self.method)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub global_seed: u64,
    pub config_hash: String,
    /// Wall-clock time is deliberately absent from reports unless supplied,
    /// so reruns are byte-identical.
    pub timestamp: Option<String>,
    pub ci_mode: CiMode,
    pub domains: Vec<String>,
    pub archs: Vec<String>,
    pub complete: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub cells: Vec<CellResult>,
}

impl ExperimentReport {
    pub fn cell(&self, train: &str, test: &str, arch: &str, method: Method) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.train_set == train && c.test_set == test && c.arch == arch && c.method == method)
    }

    /// Every `(train, test, arch, method)` combination implied by the metadata.
    pub fn expected_keys(&self) -> Vec<(String, String, String, Method)> {
        let d = &self.metadata.domains;
        let mut keys = Vec::new();
        for train in d {
            for test in d {
                for arch in &self.metadata.archs {
                    for m in Method::ALL {
                        keys.push((train.clone(), test.clone(), arch.clone(), m));
                    }
                }
            }
        }
        keys
    }

    pub fn missing_keys(&self) -> Vec<(String, String, String, Method)> {
        let have: BTreeSet<_> = self.cells.iter().map(CellResult::key).collect();
        self.expected_keys().into_iter().filter(|k| !have.contains(k)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Plain-text, CSV and JSON renderings of a complete report.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
    pub json: String,
}

/// Test domains for one training domain: cross-domain rows first, then the
/// same-domain row.
fn test_order<'a>(domains: &'a [String], train: &'a str) -> impl Iterator<Item = &'a String> {
    domains
        .iter()
        .filter(move |d| *d != train)
        .chain(domains.iter().filter(move |d| *d == train))
}

/// Renders the results matrix: rows grouped by training set then testing
/// set, columns `arch × {Baseline, UDA}`, each cell `"m ± h"` to 3 decimals.
pub fn build_table(report: &ExperimentReport) -> Result<RenderedTable> {
    let missing = report.missing_keys();
    if !missing.is_empty() {
        let list: Vec<String> = missing
            .iter()
            .map(|(tr, te, a, m)| format!("({tr}, {te}, {a}, {})", m.name()))
            .collect();
        return Err(Error::Metric(format!("report is missing cells: {}", list.join(", "))));
    }
    let md = &report.metadata;
    let mut header = vec!["Training Set".to_string(), "Testing Set".to_string()];
    for arch in &md.archs {
        for m in Method::ALL {
            header.push(format!("{arch} {}", m.title()));
        }
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut csv = String::from("train_set,test_set,arch,method,auroc_mean,ci_halfwidth,n_runs\n");
    for train in &md.domains {
        for (k, test) in test_order(&md.domains, train).enumerate() {
            let mut row = vec![if k == 0 { train.clone() } else { String::new() }, test.clone()];
            for arch in &md.archs {
                for m in Method::ALL {
                    let c = report.cell(train, test, arch, m).expect("completeness checked");
                    row.push(format!("{:.3} ± {:.3}", c.auroc_mean, c.ci_halfwidth));
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{:.9},{:.9},{}",
                        c.train_set,
                        c.test_set,
                        c.arch,
                        c.method.name(),
                        c.auroc_mean,
                        c.ci_halfwidth,
                        c.n_runs
                    );
                }
            }
            rows.push(row);
        }
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain(std::iter::once(header[i].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let fmt_row = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |", parts.join(" | "))
    };
    let rule = format!("+{}+", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("+"));
    let ci_label = match md.ci_mode {
        CiMode::MultiRun => "multi-run normal interval",
        CiMode::Bootstrap => "stratified bootstrap",
    };
    let mut text = String::new();
    let _ = writeln!(text, "Testing Results of Different Methods.");
    let _ = writeln!(text, "Mean auROC (95% Confidence Interval; {ci_label})");
    let _ = writeln!(text, "{rule}");
    let _ = writeln!(text, "{}", fmt_row(&header));
    let _ = writeln!(text, "{rule}");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(text, "{}", fmt_row(r));
        if i % md.domains.len() == md.domains.len() - 1 {
            let _ = writeln!(text, "{rule}");
        }
    }
    Ok(RenderedTable {
        text,
        csv,
        json: report.to_json()?,
    })
}

/// One parsed line of the table CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvCell {
    pub train_set: String,
    pub test_set: String,
    pub arch: String,
    pub method: Method,
    pub auroc_mean: f64,
    pub ci_halfwidth: f64,
    pub n_runs: usize,
}

pub fn parse_table_csv(text: &str) -> Result<Vec<CsvCell>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "train_set,test_set,arch,method,auroc_mean,ci_halfwidth,n_runs" {
        return Err(Error::Metric(format!("unexpected table CSV header {header:?}")));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::Metric(format!("malformed table CSV row {l:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            Ok(CsvCell {
                train_set: f[0].into(),
                test_set: f[1].into(),
                arch: f[2].into(),
                method: f[3].parse()?,
                auroc_mean: f[4].parse().map_err(|_| bad())?,
                ci_halfwidth: f[5].parse().map_err(|_| bad())?,
                n_runs: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

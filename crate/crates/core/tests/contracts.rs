//! Property tests for the data, translation, mixing, storage and metric
//! contracts.

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use uda_core::classifier::{mix_datasets, ScoredSet};
use uda_core::data::{
    apply_style, generate_synthetic_pair, quantize, split_dataset, DomainDataset, GenConfig, ImageSample, Label,
    Provenance, StyleConfig,
};
use uda_core::metrics::{
    build_table, multi_run_ci, parse_table_csv, roc_auc, roc_auc_oracle, CellResult, CiMode, ExperimentReport, Method,
    ReportMetadata,
};
use uda_core::store::{load_dataset, save_dataset, Part};
use uda_core::tensor::Tensor;
use uda_core::translator::{
    generator_objective, init_translator, l1_mean, lsgan_loss, translate_dataset, Direction, TranslatorConfig,
};

fn dataset(domain: &str, size: usize, labels: &[bool], pixels: &[u8]) -> DomainDataset {
    let plane = size * size;
    let samples = labels
        .iter()
        .enumerate()
        .map(|(i, &pos)| ImageSample {
            id: format!("{domain}{i:04}"),
            label: if pos { Label::Positive } else { Label::Negative },
            pixels: (0..plane).map(|k| pixels[(i * plane + k) % pixels.len()] as f64 / 255.0).collect(),
            provenance: Provenance::Real,
        })
        .collect();
    DomainDataset::new(domain, size, samples).unwrap()
}

fn arb_dataset(size: usize, max_len: usize) -> impl Strategy<Value = DomainDataset> {
    (
        prop::collection::vec(any::<bool>(), 1..max_len),
        prop::collection::vec(any::<u8>(), 1..200),
    )
        .prop_map(move |(labels, px)| dataset("A", size, &labels, &px))
}

fn arb_style() -> impl Strategy<Value = StyleConfig> {
    (0.2..3.0f64, 0.2..3.0f64, -0.5..0.5f64, 0.0..0.2f64, 0.0..2.0f64, any::<bool>()).prop_map(
        |(gamma, contrast, brightness_offset, noise_sigma, blur_sigma, invert)| StyleConfig {
            gamma,
            contrast,
            brightness_offset,
            noise_sigma,
            blur_sigma,
            invert,
        },
    )
}

/// Tie-rich scored sets: scores on a coarse grid, both classes present.
fn arb_scored() -> impl Strategy<Value = Vec<(bool, f64)>> {
    prop::collection::vec((any::<bool>(), 0u8..=20), 2..200).prop_map(|mut rows| {
        rows[0].0 = true;
        rows[1].0 = false;
        rows.into_iter().map(|(l, s)| (l, s as f64 / 20.0)).collect()
    })
}

fn label_counts(ds: &DomainDataset) -> (usize, usize) {
    (ds.count(Label::Positive), ds.count(Label::Negative))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identity_style_is_identity_on_quantized_images(
        px in (1usize..18).prop_flat_map(|side| prop::collection::vec(any::<u8>(), side * side)),
        seed in any::<u64>(),
    ) {
        let img: Vec<f64> = px.iter().map(|&p| p as f64 / 255.0).collect();
        prop_assert_eq!(apply_style(&img, &StyleConfig::identity(), seed), img);
    }

    #[test]
    fn styled_pixels_stay_in_range_and_are_seeded(
        px in prop::collection::vec(0.0..=1.0f64, 64),
        style in arb_style(),
        seed in any::<u64>(),
    ) {
        let out = apply_style(&px, &style, seed);
        prop_assert!(out.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert_eq!(out, apply_style(&px, &style, seed));
    }

    #[test]
    fn generated_counts_match_and_are_reproducible(n_pos in 1usize..6, n_neg in 1usize..6, seed in any::<u64>()) {
        let cfg = GenConfig { n_pos, n_neg, image_size: 16, lesion_radius_range: [2.0, 4.0], seed, ..GenConfig::default() };
        let (a, b) = generate_synthetic_pair(&cfg).unwrap();
        for ds in [&a, &b] {
            prop_assert_eq!(label_counts(ds), (n_pos, n_neg));
            prop_assert!(ds.samples().iter().all(|s| s.pixels.iter().all(|p| (0.0..=1.0).contains(p))));
        }
        prop_assert_eq!((a, b), generate_synthetic_pair(&cfg).unwrap());
    }

    #[test]
    fn split_is_a_stratified_partition(
        n_pos in 2usize..40,
        n_neg in 2usize..40,
        fraction in 0.05..0.95f64,
        seed in any::<u64>(),
    ) {
        let labels: Vec<bool> = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
        let ds = dataset("A", 4, &labels, &[0, 128, 255]);
        let (train, test) = split_dataset(&ds, fraction, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), ds.len());
        let tr: HashSet<_> = train.samples().iter().map(|s| s.id.clone()).collect();
        let te: HashSet<_> = test.samples().iter().map(|s| s.id.clone()).collect();
        prop_assert!(tr.is_disjoint(&te));
        let all: HashSet<_> = ds.samples().iter().map(|s| s.id.clone()).collect();
        prop_assert_eq!(tr.union(&te).cloned().collect::<HashSet<_>>(), all);
        let floor = |n: usize| (fraction * n as f64).floor() as usize;
        prop_assert_eq!(label_counts(&train), (floor(n_pos), floor(n_neg)));
        let again = split_dataset(&ds, fraction, seed).unwrap();
        prop_assert_eq!(again, (train, test));
    }

    #[test]
    fn save_load_round_trip(ds in arb_dataset(5, 12)) {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path(), Part::Train).unwrap();
        let back = load_dataset(dir.path(), "A", Part::Train).unwrap();
        prop_assert_eq!(back, ds.sorted_by_id());
    }

    #[test]
    fn mixture_adds_counts_and_keeps_pairs(ds in arb_dataset(8, 12)) {
        let model = init_translator(&TranslatorConfig { base_channels: 2, n_residual_blocks: 1, ..Default::default() }, 8).unwrap();
        let syn = translate_dataset(&model, &ds, Direction::AToB).unwrap();
        let mix = mix_datasets(&ds, &syn).unwrap();
        prop_assert_eq!(mix.len(), ds.len() + syn.len());
        let (p, n) = label_counts(&ds);
        prop_assert_eq!(label_counts(&mix), (2 * p, 2 * n));
        let labels: BTreeMap<&str, Label> = mix.samples().iter().map(|s| (s.id.as_str(), s.label)).collect();
        for s in ds.samples() {
            prop_assert_eq!(labels.get(s.id.as_str()), Some(&s.label));
            prop_assert_eq!(labels.get(format!("{}~syn", s.id).as_str()), Some(&s.label));
        }
        prop_assert_eq!(mix.clone(), mix_datasets(&ds, &syn).unwrap());

        let empty = DomainDataset::new("A~syn", 8, Vec::new()).unwrap();
        let same = mix_datasets(&ds, &empty).unwrap();
        prop_assert_eq!(same.sorted_by_id(), ds.clone().sorted_by_id());
    }

    #[test]
    fn translation_preserves_bookkeeping(ds in arb_dataset(8, 20), seed in any::<u64>(), b_to_a in any::<bool>()) {
        let cfg = TranslatorConfig { base_channels: 2, n_residual_blocks: 1, seed, ..Default::default() };
        let model = init_translator(&cfg, 8).unwrap();
        let dir = if b_to_a { Direction::BToA } else { Direction::AToB };
        let out = translate_dataset(&model, &ds, dir).unwrap();
        prop_assert_eq!(out.len(), ds.len());
        prop_assert_eq!(out.domain(), "A~syn");
        for (o, s) in out.samples().iter().zip(ds.samples()) {
            prop_assert_eq!(&o.id, &format!("{}~syn", s.id));
            prop_assert_eq!(o.label, s.label);
            prop_assert_eq!(&o.provenance, &Provenance::SynthesizedFrom("A".into()));
            prop_assert!(o.pixels.iter().all(|p| (0.0..=1.0).contains(p) && quantize(*p) == *p));
        }
    }

    #[test]
    fn translator_losses_are_nonnegative(
        x in prop::collection::vec(0.0..=1.0f64, 16),
        y in prop::collection::vec(0.0..=1.0f64, 16),
        real in any::<bool>(),
    ) {
        let tx = Tensor::from_vec(&[1, 1, 4, 4], x);
        let ty = Tensor::from_vec(&[1, 1, 4, 4], y);
        prop_assert!(lsgan_loss(&tx, real) >= 0.0);
        prop_assert!(l1_mean(&tx, &ty).unwrap() >= 0.0);
        prop_assert_eq!(l1_mean(&tx, &tx).unwrap(), 0.0);
    }

    #[test]
    fn auc_is_rank_based(rows in arb_scored()) {
        let s = ScoredSet::from_pairs(&rows);
        let auc = roc_auc(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert!((auc - roc_auc_oracle(&s).unwrap()).abs() <= 1e-12);

        let monotone: Vec<(bool, f64)> = rows.iter().map(|&(l, v)| (l, (0.5 * v + 0.1).powi(3))).collect();
        prop_assert_eq!(roc_auc(&ScoredSet::from_pairs(&monotone)).unwrap(), auc);

        let flipped: Vec<(bool, f64)> = rows.iter().map(|&(l, v)| (l, 1.0 - v)).collect();
        let comp = roc_auc(&ScoredSet::from_pairs(&flipped)).unwrap();
        prop_assert!((auc + comp - 1.0).abs() <= 2.0 * f64::EPSILON);
    }

    #[test]
    fn multi_run_ci_symmetries(runs in prop::collection::vec(0.0..1.0f64, 2..8), shift in -0.5..0.5f64) {
        let (m, h) = multi_run_ci(&runs, 0.05).unwrap();
        let mut rev = runs.clone();
        rev.reverse();
        let (mr, hr) = multi_run_ci(&rev, 0.05).unwrap();
        prop_assert!((m - mr).abs() < 1e-12 && (h - hr).abs() < 1e-12);

        let moved: Vec<f64> = runs.iter().map(|v| v + shift).collect();
        let (ms, hs) = multi_run_ci(&moved, 0.05).unwrap();
        prop_assert!((ms - (m + shift)).abs() < 1e-12);
        prop_assert!((hs - h).abs() < 1e-9);

        let all_equal = runs.iter().all(|&v| v == runs[0]);
        prop_assert_eq!(h == 0.0, all_equal);
    }

    #[test]
    fn table_csv_and_json_round_trip(vals in prop::collection::vec((0.0..1.0f64, 0.0..0.2f64), 16)) {
        let report = report_with(&["A", "B"], &["mini_alexnet", "mini_resnet"], |i| vals[i]);
        let table = build_table(&report).unwrap();
        let parsed = parse_table_csv(&table.csv).unwrap();
        prop_assert_eq!(parsed.len(), 16);
        for p in &parsed {
            let c = report.cell(&p.train_set, &p.test_set, &p.arch, p.method).unwrap();
            prop_assert_eq!((p.auroc_mean, p.ci_halfwidth, p.n_runs), (c.auroc_mean, c.ci_halfwidth, c.n_runs));
        }
        prop_assert_eq!(ExperimentReport::from_json(&table.json).unwrap(), report);
    }
}

/// A complete report whose i-th cell (in metadata order) gets `value(i)`.
fn report_with(domains: &[&str], archs: &[&str], value: impl Fn(usize) -> (f64, f64)) -> ExperimentReport {
    let mut cells = Vec::new();
    for train in domains {
        for test in domains {
            for arch in archs {
                for m in Method::ALL {
                    let (mean, half) = value(cells.len());
                    cells.push(CellResult::new(train, test, arch, m, &[mean], half));
                }
            }
        }
    }
    ExperimentReport {
        metadata: ReportMetadata {
            global_seed: 1,
            config_hash: "test".into(),
            timestamp: None,
            ci_mode: CiMode::MultiRun,
            domains: domains.iter().map(|d| d.to_string()).collect(),
            archs: archs.iter().map(|a| a.to_string()).collect(),
            complete: true,
            failures: Vec::new(),
        },
        cells,
    }
}

#[test]
fn table_renders_the_published_values() {
    // (train, test, arch, method) -> (mean, half-width) from the published table.
    let published: &[(&str, &str, &str, Method, f64, f64)] = &[
        ("UKY", "DDSM", "AlexNet", Method::Baseline, 0.516, 0.004),
        ("UKY", "DDSM", "AlexNet", Method::Uda, 0.601, 0.005),
        ("UKY", "DDSM", "ResNet", Method::Baseline, 0.624, 0.004),
        ("UKY", "DDSM", "ResNet", Method::Uda, 0.672, 0.002),
        ("UKY", "UKY", "AlexNet", Method::Baseline, 0.785, 0.003),
        ("UKY", "UKY", "AlexNet", Method::Uda, 0.769, 0.007),
        ("UKY", "UKY", "ResNet", Method::Baseline, 0.836, 0.008),
        ("UKY", "UKY", "ResNet", Method::Uda, 0.869, 0.016),
        ("DDSM", "UKY", "AlexNet", Method::Baseline, 0.491, 0.007),
        ("DDSM", "UKY", "AlexNet", Method::Uda, 0.578, 0.002),
        ("DDSM", "UKY", "ResNet", Method::Baseline, 0.565, 0.002),
        ("DDSM", "UKY", "ResNet", Method::Uda, 0.674, 0.003),
        ("DDSM", "DDSM", "AlexNet", Method::Baseline, 0.673, 0.015),
        ("DDSM", "DDSM", "AlexNet", Method::Uda, 0.653, 0.024),
        ("DDSM", "DDSM", "ResNet", Method::Baseline, 0.762, 0.008),
        ("DDSM", "DDSM", "ResNet", Method::Uda, 0.759, 0.012),
    ];
    let mut report = report_with(&["UKY", "DDSM"], &["AlexNet", "ResNet"], |_| (0.0, 0.0));
    for c in &mut report.cells {
        let &(.., mean, half) = published
            .iter()
            .find(|p| (p.0, p.1, p.2, p.3) == (c.train_set.as_str(), c.test_set.as_str(), c.arch.as_str(), c.method))
            .unwrap();
        *c = CellResult::new(&c.train_set, &c.test_set, &c.arch, c.method, &[mean], half);
    }
    let table = build_table(&report).unwrap();
    let row = table
        .text
        .lines()
        .find(|l| l.contains("UKY") && l.contains("DDSM"))
        .unwrap();
    let cols: Vec<&str> = row.split('|').map(str::trim).filter(|c| !c.is_empty()).collect();
    assert_eq!(cols, ["UKY", "DDSM", "0.516 ± 0.004", "0.601 ± 0.005", "0.624 ± 0.004", "0.672 ± 0.002"]);
    // 2 training sets × 2 testing sets rows.
    assert_eq!(table.text.lines().filter(|l| l.contains(" ± ")).count(), 4);
}

#[test]
fn incomplete_report_names_the_missing_cell() {
    let mut report = report_with(&["A", "B"], &["mini_alexnet", "mini_resnet"], |_| (0.5, 0.0));
    report.cells.retain(|c| !(c.train_set == "B" && c.test_set == "A" && c.arch == "mini_resnet" && c.method == Method::Uda));
    assert_eq!(report.cells.len(), 15);
    let err = build_table(&report).unwrap_err().to_string();
    assert!(err.contains("(B, A, mini_resnet, uda)"), "{err}");
}

#[test]
fn adversarial_terms_alone_when_weights_are_zero() {
    let cfg = TranslatorConfig {
        base_channels: 2,
        n_residual_blocks: 1,
        lambda_cyc: 0.0,
        lambda_id: 0.0,
        seed: 3,
        ..Default::default()
    };
    let model = init_translator(&cfg, 8).unwrap();
    let a = Tensor::full(&[2, 1, 8, 8], 0.3);
    let b = Tensor::full(&[2, 1, 8, 8], 0.6);
    let (total, terms) = generator_objective(&model, &a, &b).unwrap();
    assert_eq!(total, terms.adv_ab + terms.adv_ba);
    assert!(terms.cycle > 0.0, "components are still reported");
}

#[test]
fn identity_generators_have_zero_cycle_loss() {
    let cfg = TranslatorConfig {
        base_channels: 2,
        n_residual_blocks: 1,
        ..Default::default()
    };
    let mut model = init_translator(&cfg, 8).unwrap();
    // Zeroing the output conv leaves only the skip path: G(x) = x.
    for gen in [&mut model.gen_ab, &mut model.gen_ba] {
        let mut flat = gen.flat_values();
        let mut off = 0;
        for (name, t) in gen.iter() {
            if name.starts_with("out.") {
                flat[off..off + t.len()].fill(0.0);
            }
            off += t.len();
        }
        *gen = gen.with_values(&flat);
    }
    let a = Tensor::from_vec(&[1, 1, 8, 8], (0..64).map(|i| 0.2 + i as f64 / 160.0).collect());
    let b = Tensor::full(&[1, 1, 8, 8], 0.55);
    let (_, terms) = generator_objective(&model, &a, &b).unwrap();
    assert!(terms.cycle < 1e-12, "cycle {}", terms.cycle);
}

//! Labelled grayscale image datasets, the synthetic two-domain benchmark,
//! style transforms and stratified splitting.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};
use crate::tensor::Tensor;

/// Suffix appended to ids of translated samples.
pub const SYN_SUFFIX: &str = "~syn";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn as_target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }

    /// Directory name used on disk.
    pub fn dir_name(self) -> &'static str {
        match self {
            Label::Positive => "pos",
            Label::Negative => "neg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Real,
    SynthesizedFrom(String),
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Real => f.write_str("real"),
            Provenance::SynthesizedFrom(d) => write!(f, "synthesized_from:{d}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub id: String,
    pub label: Label,
    /// Row-major `size × size` intensities in `[0, 1]`.
    pub pixels: Vec<f64>,
    pub provenance: Provenance,
}

/// An ordered, id-unique collection of equally sized samples from one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    domain: String,
    image_size: usize,
    samples: Vec<ImageSample>,
}

impl DomainDataset {
    /// Validates shape, range and id uniqueness.
    pub fn new(domain: impl Into<String>, image_size: usize, samples: Vec<ImageSample>) -> Result<Self> {
        if image_size == 0 {
            return Err(Error::validation("image_size", "must be positive"));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.pixels.len() != image_size * image_size {
                return Err(Error::Shape(format!(
                    "sample {} has {} pixels, expected {}",
                    s.id,
                    s.pixels.len(),
                    image_size * image_size
                )));
            }
            if let Some(p) = s.pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::validation("pixels", format!("sample {} has intensity {p} outside [0,1]", s.id)));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::validation("id", format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(DomainDataset {
            domain: domain.into(),
            image_size,
            samples,
        })
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn samples(&self) -> &[ImageSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }

    pub fn mean_intensity(&self) -> f64 {
        let total: f64 = self.samples.iter().flat_map(|s| s.pixels.iter()).sum();
        total / (self.samples.len() * self.image_size * self.image_size).max(1) as f64
    }

    /// Stacks the given sample indices into an `[n, 1, s, s]` batch.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let s = self.image_size;
        let mut data = Vec::with_capacity(indices.len() * s * s);
        for &i in indices {
            data.extend_from_slice(&self.samples[i].pixels);
        }
        Tensor::from_vec(&[indices.len(), 1, s, s], data)
    }

    /// Same dataset with samples sorted lexicographically by id.
    pub fn sorted_by_id(mut self) -> Self {
        self.samples.sort_by(|a, b| a.id.cmp(&b.id));
        self
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }

    pub fn into_samples(self) -> Vec<ImageSample> {
        self.samples
    }
}

/// Rounds to the nearest 8-bit level, the canonical stored precision.
pub fn quantize(p: f64) -> f64 {
    (p.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Acquisition style applied to clean renders: blur, contrast/brightness,
/// gamma, additive noise, then optional inversion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StyleConfig {
    pub gamma: f64,
    pub contrast: f64,
    pub brightness_offset: f64,
    pub noise_sigma: f64,
    pub blur_sigma: f64,
    pub invert: bool,
}

impl StyleConfig {
    pub fn identity() -> Self {
        StyleConfig {
            gamma: 1.0,
            contrast: 1.0,
            brightness_offset: 0.0,
            noise_sigma: 0.0,
            blur_sigma: 0.0,
            invert: false,
        }
    }

    /// The default shifted domain used by the desk benchmark.
    pub fn default_shift() -> Self {
        StyleConfig {
            gamma: 0.5,
            contrast: 1.3,
            brightness_offset: 0.0,
            noise_sigma: 0.05,
            blur_sigma: 0.8,
            invert: false,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |name: &str, why: &str| Err(Error::validation(format!("{field}.{name}"), why));
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma", "must be positive");
        }
        if !(self.contrast.is_finite() && self.contrast > 0.0) {
            return bad("contrast", "must be positive");
        }
        if !self.brightness_offset.is_finite() {
            return bad("brightness_offset", "must be finite");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be nonnegative");
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return bad("blur_sigma", "must be nonnegative");
        }
        Ok(())
    }
}

impl Default for StyleConfig {
    fn default() -> Self {
        StyleConfig::identity()
    }
}

fn gaussian_blur(pixels: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clampi = |v: isize| v.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; pixels.len()];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * pixels[y * size + clampi(x as isize + k as isize - radius)])
                .sum();
        }
    }
    let mut out = vec![0.0; pixels.len()];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clampi(y as isize + k as isize - radius) * size + x])
                .sum();
        }
    }
    out
}

/// Applies `style` to a square image. Stages whose parameters are at their
/// identity value are skipped, so the identity style returns the input
/// bit-for-bit.
pub fn apply_style(pixels: &[f64], style: &StyleConfig, noise_seed: u64) -> Vec<f64> {
    let size = (pixels.len() as f64).sqrt().round() as usize;
    assert_eq!(size * size, pixels.len(), "apply_style expects a square image");
    let mut out = if style.blur_sigma > 0.0 {
        gaussian_blur(pixels, size, style.blur_sigma)
    } else {
        pixels.to_vec()
    };
    if style.contrast != 1.0 || style.brightness_offset != 0.0 {
        for p in &mut out {
            *p = ((*p - 0.5) * style.contrast + 0.5 + style.brightness_offset).clamp(0.0, 1.0);
        }
    }
    if style.gamma != 1.0 {
        for p in &mut out {
            *p = p.powf(style.gamma);
        }
    }
    if style.noise_sigma > 0.0 {
        let mut rng = rng_from(noise_seed);
        for p in &mut out {
            let n: f64 = StandardNormal.sample(&mut rng);
            *p = (*p + style.noise_sigma * n).clamp(0.0, 1.0);
        }
    }
    if style.invert {
        for p in &mut out {
            *p = 1.0 - *p;
        }
    }
    out
}

/// Parameters of the synthetic blob-detection benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n_pos: usize,
    pub n_neg: usize,
    pub image_size: usize,
    pub lesion_radius_range: [f64; 2],
    pub lesion_contrast_range: [f64; 2],
    pub style_a: StyleConfig,
    pub style_b: StyleConfig,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_pos: 250,
            n_neg: 250,
            image_size: 64,
            lesion_radius_range: [4.0, 9.0],
            lesion_contrast_range: [0.08, 0.2],
            style_a: StyleConfig::identity(),
            style_b: StyleConfig::default_shift(),
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pos < 1 {
            return Err(Error::validation("n_pos", "must be at least 1"));
        }
        if self.n_neg < 1 {
            return Err(Error::validation("n_neg", "must be at least 1"));
        }
        if self.image_size < 16 {
            return Err(Error::validation("image_size", "must be at least 16"));
        }
        let [rlo, rhi] = self.lesion_radius_range;
        if !(rlo.is_finite() && rhi.is_finite() && rlo > 0.0 && rlo <= rhi) {
            return Err(Error::validation("lesion_radius_range", "need 0 < min <= max"));
        }
        let [clo, chi] = self.lesion_contrast_range;
        if !(clo.is_finite() && chi.is_finite() && clo <= chi) {
            return Err(Error::validation("lesion_contrast_range", "need min <= max"));
        }
        self.style_a.validate("style_a")?;
        self.style_b.validate("style_b")
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Renders one clean (unstyled) sample from its own stream.
fn render_clean(cfg: &GenConfig, positive: bool, stream_seed: u64) -> Vec<f64> {
    let size = cfg.image_size;
    let s = size as f64;
    let mut rng = rng_from(stream_seed);

    // Smooth background: base level plus a few low-frequency plane waves.
    let base = rng.random_range(0.25..0.40);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.random_range(0.5..2.0) * 2.0 * PI / s;
            let theta = rng.random_range(0.0..PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            let amp = rng.random_range(0.01..0.05);
            (freq * theta.cos(), freq * theta.sin(), phase, amp)
        })
        .collect();
    let mut px: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            base + waves.iter().map(|&(fx, fy, ph, a)| a * (fx * x + fy * y + ph).sin()).sum::<f64>()
        })
        .collect();

    if positive {
        let radius = uniform(&mut rng, cfg.lesion_radius_range);
        let aspect = rng.random_range(0.6..1.0);
        let (rx, ry) = (radius, radius * aspect);
        let margin = radius + 2.0;
        let cx = rng.random_range(margin.min(s / 2.0)..(s - margin).max(s / 2.0 + 1e-9));
        let cy = rng.random_range(margin.min(s / 2.0)..(s - margin).max(s / 2.0 + 1e-9));
        let rot = rng.random_range(0.0..PI);
        let contrast = uniform(&mut rng, cfg.lesion_contrast_range);
        // Boundary wobble makes the ellipse irregular.
        let harmonics: Vec<(f64, f64)> = (2..5)
            .map(|k| (rng.random_range(0.0..0.15) / (k as f64 - 1.0), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let (c, sn) = (rot.cos(), rot.sin());
        for (i, p) in px.iter_mut().enumerate() {
            let dx = (i % size) as f64 - cx;
            let dy = (i / size) as f64 - cy;
            let u = (c * dx + sn * dy) / rx;
            let v = (-sn * dx + c * dy) / ry;
            let phi = v.atan2(u);
            let wobble = 1.0
                + harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, ph))| a * ((k + 2) as f64 * phi + ph).cos())
                    .sum::<f64>();
            let dist = (u * u + v * v).sqrt() / wobble;
            let profile = 1.0 / (1.0 + ((dist - 1.0) / 0.15).exp());
            *p += contrast * profile;
        }
    }
    px.iter().map(|p| p.clamp(0.0, 1.0)).collect()
}

/// Renders the full dataset for one domain: `n_pos` positives then `n_neg`
/// negatives, each drawn from a stream derived from `(seed, stream, index)`
/// and styled with `style`.
pub fn render_domain(cfg: &GenConfig, domain: &str, stream: &str, style: &StyleConfig) -> Result<DomainDataset> {
    cfg.validate()?;
    let total = cfg.n_pos + cfg.n_neg;
    let samples = (0..total)
        .map(|i| {
            let positive = i < cfg.n_pos;
            let idx = i.to_string();
            let content_seed = derive_seed(cfg.seed, &["content", stream, &idx]);
            let noise_seed = derive_seed(cfg.seed, &["noise", stream, &idx]);
            let clean = render_clean(cfg, positive, content_seed);
            let styled = apply_style(&clean, style, noise_seed);
            ImageSample {
                id: format!("{domain}{i:05}"),
                label: if positive { Label::Positive } else { Label::Negative },
                pixels: styled.into_iter().map(quantize).collect(),
                provenance: Provenance::Real,
            }
        })
        .collect();
    DomainDataset::new(domain, cfg.image_size, samples)
}

/// Generates domains "A" and "B": the same blob-detection task rendered
/// under `style_a` and `style_b`, from independent per-domain sample streams.
pub fn generate_synthetic_pair(cfg: &GenConfig) -> Result<(DomainDataset, DomainDataset)> {
    cfg.validate()?;
    Ok((
        render_domain(cfg, "A", "A", &cfg.style_a)?,
        render_domain(cfg, "B", "B", &cfg.style_b)?,
    ))
}

/// Stratified split: each class contributes `floor(fraction × count)`
/// samples to train. Both halves come back sorted by id.
pub fn split_dataset(ds: &DomainDataset, train_fraction: f64, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::validation("train_fraction", "must lie strictly between 0 and 1"));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Negative, Label::Positive] {
        let mut members: Vec<&ImageSample> = ds.samples.iter().filter(|s| s.label == label).collect();
        if members.len() < 2 {
            return Err(Error::validation(
                "dataset",
                format!("class {label:?} has {} sample(s); cannot stratify", members.len()),
            ));
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = rng_from(derive_seed(seed, &["split", label.dir_name()]));
        members.shuffle(&mut rng);
        let n_train = (train_fraction * members.len() as f64).floor() as usize;
        train.extend(members[..n_train].iter().map(|s| (*s).clone()));
        test.extend(members[n_train..].iter().map(|s| (*s).clone()));
    }
    let train = DomainDataset::new(ds.domain.clone(), ds.image_size, train)?.sorted_by_id();
    let test = DomainDataset::new(ds.domain.clone(), ds.image_size, test)?.sorted_by_id();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GenConfig {
        GenConfig {
            n_pos: 6,
            n_neg: 5,
            image_size: 16,
            ..GenConfig::default()
        }
    }

    #[test]
    fn style_examples() {
        let half = vec![0.5; 16];
        let inv = StyleConfig {
            invert: true,
            ..StyleConfig::identity()
        };
        assert_eq!(apply_style(&half, &inv, 1), half);
        let quarter = vec![0.25; 16];
        let gamma = StyleConfig {
            gamma: 0.5,
            ..StyleConfig::identity()
        };
        assert_eq!(apply_style(&quarter, &gamma, 1), vec![0.5; 16]);
    }

    #[test]
    fn style_output_in_range_and_seeded() {
        let img: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
        let st = StyleConfig {
            gamma: 0.7,
            contrast: 2.5,
            brightness_offset: 0.2,
            noise_sigma: 0.3,
            blur_sigma: 1.2,
            invert: true,
        };
        let a = apply_style(&img, &st, 11);
        assert!(a.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(a, apply_style(&img, &st, 11));
        assert_ne!(a, apply_style(&img, &st, 12));
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = vec![0.3; 100];
        let st = StyleConfig {
            blur_sigma: 1.5,
            ..StyleConfig::identity()
        };
        for p in apply_style(&img, &st, 0) {
            assert!((p - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_names_field() {
        let mut cfg = small_cfg();
        cfg.image_size = 8;
        assert!(matches!(cfg.validate(), Err(Error::Validation { field, .. }) if field == "image_size"));
        let mut cfg = small_cfg();
        cfg.n_neg = 0;
        assert!(matches!(cfg.validate(), Err(Error::Validation { field, .. }) if field == "n_neg"));
        let mut cfg = small_cfg();
        cfg.lesion_contrast_range = [0.4, 0.1];
        assert!(matches!(cfg.validate(), Err(Error::Validation { field, .. }) if field == "lesion_contrast_range"));
        let mut cfg = small_cfg();
        cfg.style_b.gamma = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Validation { field, .. }) if field == "style_b.gamma"));
    }

    #[test]
    fn identity_styles_share_render_path() {
        let mut cfg = small_cfg();
        cfg.style_a = StyleConfig::identity();
        cfg.style_b = StyleConfig::identity();
        let a = render_domain(&cfg, "A", "A", &cfg.style_a).unwrap();
        let b = render_domain(&cfg, "B", "A", &cfg.style_b).unwrap();
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert_eq!(x.pixels, y.pixels);
            assert_eq!(x.label, y.label);
        }
    }

    #[test]
    fn positives_are_brighter_somewhere() {
        let cfg = GenConfig {
            n_pos: 20,
            n_neg: 20,
            style_b: StyleConfig::identity(),
            ..GenConfig::default()
        };
        let (a, _) = generate_synthetic_pair(&cfg).unwrap();
        let peak = |s: &ImageSample| s.pixels.iter().cloned().fold(0.0, f64::max);
        let pos: f64 = a.samples().iter().filter(|s| s.label.is_positive()).map(peak).sum::<f64>() / 20.0;
        let neg: f64 = a.samples().iter().filter(|s| !s.label.is_positive()).map(peak).sum::<f64>() / 20.0;
        assert!(pos > neg + 0.05, "pos peak {pos} neg peak {neg}");
    }

    #[test]
    fn split_small_example() {
        let cfg = GenConfig {
            n_pos: 5,
            n_neg: 5,
            image_size: 16,
            ..GenConfig::default()
        };
        let (a, _) = generate_synthetic_pair(&cfg).unwrap();
        let (tr, te) = split_dataset(&a, 0.8, 3).unwrap();
        assert_eq!((tr.len(), tr.count(Label::Positive), tr.count(Label::Negative)), (8, 4, 4));
        assert_eq!((te.len(), te.count(Label::Positive), te.count(Label::Negative)), (2, 1, 1));
    }

    #[test]
    fn split_rejects_tiny_class_and_bad_fraction() {
        let cfg = GenConfig {
            n_pos: 1,
            n_neg: 5,
            image_size: 16,
            ..GenConfig::default()
        };
        let (a, _) = generate_synthetic_pair(&cfg).unwrap();
        assert!(split_dataset(&a, 0.8, 1).is_err());
        let (b, _) = generate_synthetic_pair(&small_cfg()).unwrap();
        assert!(split_dataset(&b, 1.0, 1).is_err());
        assert!(split_dataset(&b, 0.0, 1).is_err());
    }

    #[test]
    fn dataset_rejects_duplicates_and_out_of_range() {
        let s = ImageSample {
            id: "x".into(),
            label: Label::Positive,
            pixels: vec![0.5; 4],
            provenance: Provenance::Real,
        };
        assert!(DomainDataset::new("A", 2, vec![s.clone(), s.clone()]).is_err());
        let mut bad = s.clone();
        bad.pixels[0] = 1.5;
        assert!(DomainDataset::new("A", 2, vec![bad]).is_err());
        assert!(DomainDataset::new("A", 3, vec![s]).is_err());
    }
}

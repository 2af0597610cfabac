//! On-disk dataset layout:
//! `<root>/<domain>/<train|test>/<pos|neg>/<id>.png` (8-bit grayscale) with a
//! `manifest.json` at `<root>` describing every stored domain/part.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DomainDataset, ImageSample, Label, Provenance, SYN_SUFFIX};
use crate::error::{Error, Result};

pub const DATASET_FORMAT_VERSION: &str = "1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Train,
    Test,
}

impl Part {
    pub fn dir_name(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Test => "test",
        }
    }
}

impl std::str::FromStr for Part {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Part::Train),
            "test" => Ok(Part::Test),
            other => Err(Error::validation("part", format!("expected train|test, got {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub domain: String,
    pub part: Part,
    pub image_size: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub generator_config_hash: Option<String>,
    pub datasets: Vec<ManifestEntry>,
}

impl DatasetManifest {
    fn empty() -> Self {
        DatasetManifest {
            format_version: DATASET_FORMAT_VERSION.into(),
            generator_config_hash: None,
            datasets: Vec::new(),
        }
    }
}

pub fn read_manifest(root: &Path) -> Result<Option<DatasetManifest>> {
    let path = root.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if m.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::format(&path, format!("unsupported format version {:?}", m.format_version)));
    }
    Ok(Some(m))
}

fn write_manifest(root: &Path, m: &DatasetManifest) -> Result<()> {
    let path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(m)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Records the generator config hash in the root manifest.
pub fn set_generator_hash(root: &Path, hash: &str) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut m = read_manifest(root)?.unwrap_or_else(DatasetManifest::empty);
    m.generator_config_hash = Some(hash.to_string());
    write_manifest(root, &m)
}

fn dataset_provenance(ds: &DomainDataset) -> String {
    ds.samples()
        .iter()
        .find_map(|s| match &s.provenance {
            Provenance::SynthesizedFrom(_) => Some(s.provenance.to_string()),
            Provenance::Real => None,
        })
        .unwrap_or_else(|| Provenance::Real.to_string())
}

fn write_png(path: &Path, size: usize, pixels: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), size as u32, size as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let bytes: Vec<u8> = pixels.iter().map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut w = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    w.write_image_data(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    w.finish().map_err(|e| Error::format(path, e.to_string()))
}

fn read_png(path: &Path) -> Result<(usize, Vec<f64>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dec = png::Decoder::new(BufReader::new(file));
    let mut reader = dec.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(path, "expected 8-bit grayscale PNG"));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    if w != h {
        return Err(Error::format(path, format!("image is {w}x{h}; only square images are supported")));
    }
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(w * h)];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    let bytes = &buf[..frame.buffer_size()];
    Ok((w, bytes.iter().map(|&b| b as f64 / 255.0).collect()))
}

/// Writes `ds` as `<root>/<domain>/<part>/…`, replacing whatever was stored
/// there, and updates the root manifest.
pub fn save_dataset(ds: &DomainDataset, root: &Path, part: Part) -> Result<PathBuf> {
    let dir = root.join(ds.domain()).join(part.dir_name());
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for label in [Label::Positive, Label::Negative] {
        let sub = dir.join(label.dir_name());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    for s in ds.samples() {
        let path = dir.join(s.label.dir_name()).join(format!("{}.png", s.id));
        write_png(&path, ds.image_size(), &s.pixels)?;
    }
    let mut m = read_manifest(root)?.unwrap_or_else(DatasetManifest::empty);
    m.datasets.retain(|e| !(e.domain == ds.domain() && e.part == part));
    m.datasets.push(ManifestEntry {
        domain: ds.domain().to_string(),
        part,
        image_size: ds.image_size(),
        n_pos: ds.count(Label::Positive),
        n_neg: ds.count(Label::Negative),
        provenance: dataset_provenance(ds),
    });
    m.datasets.sort_by(|a, b| (&a.domain, a.part.dir_name()).cmp(&(&b.domain, b.part.dir_name())));
    write_manifest(root, &m)?;
    Ok(dir)
}

/// Loads `<root>/<domain>/<part>`; samples come back sorted by id.
pub fn load_dataset(root: &Path, domain: &str, part: Part) -> Result<DomainDataset> {
    let dir = root.join(domain).join(part.dir_name());
    if !dir.is_dir() {
        return Err(Error::format(&dir, "dataset directory not found"));
    }
    let manifest = read_manifest(root)?;
    let entry = manifest
        .as_ref()
        .and_then(|m| m.datasets.iter().find(|e| e.domain == domain && e.part == part));
    let synth_source = entry
        .and_then(|e| e.provenance.strip_prefix("synthesized_from:").map(str::to_string))
        .unwrap_or_else(|| domain.trim_end_matches(SYN_SUFFIX).to_string());

    let mut samples = Vec::new();
    let mut image_size = None;
    for item in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let item = item.map_err(|e| Error::io(&dir, e))?;
        let name = item.file_name().to_string_lossy().into_owned();
        let label = match name.as_str() {
            "pos" => Label::Positive,
            "neg" => Label::Negative,
            _ => return Err(Error::format(item.path(), "unexpected entry; expected pos/ or neg/")),
        };
        if !item.path().is_dir() {
            return Err(Error::format(item.path(), "expected a directory"));
        }
        for f in fs::read_dir(item.path()).map_err(|e| Error::io(item.path(), e))? {
            let f = f.map_err(|e| Error::io(item.path(), e))?;
            let path = f.path();
            let id = match (path.extension().and_then(|e| e.to_str()), path.file_stem()) {
                (Some("png"), Some(stem)) => stem.to_string_lossy().into_owned(),
                _ => return Err(Error::format(&path, "not a .png image")),
            };
            let (size, pixels) = read_png(&path)?;
            match image_size {
                None => image_size = Some(size),
                Some(s) if s != size => {
                    return Err(Error::format(&path, format!("image size {size} differs from {s}")))
                }
                _ => {}
            }
            let provenance = if id.ends_with(SYN_SUFFIX) {
                Provenance::SynthesizedFrom(synth_source.clone())
            } else {
                Provenance::Real
            };
            samples.push(ImageSample {
                id,
                label,
                pixels,
                provenance,
            });
        }
    }
    let Some(size) = image_size else {
        return Err(Error::format(&dir, "no samples found"));
    };
    if let Some(e) = entry {
        if e.image_size != size {
            return Err(Error::format(&dir, format!("manifest says image_size {} but images are {size}", e.image_size)));
        }
    }
    // Duplicate ids across pos/ and neg/ surface as a validation error here.
    DomainDataset::new(domain, size, samples)
        .map_err(|e| Error::format(&dir, e.to_string()))
        .map(DomainDataset::sorted_by_id)
}

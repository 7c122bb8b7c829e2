//! Dataset manifests: a JSON document listing every image with its split,
//! label, embedding record and optional mask. Paths are relative to the
//! manifest's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pgm::Pgm;
use super::record::{read_record, RecordHeader};
use crate::error::{DataErrorKind, PflError, Result};
use crate::infer_eval::Grid;
use crate::model::ImageFeatures;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = PflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(PflError::argument(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Stable identifier, used to name per-image outputs.
    pub id: String,
    pub category: String,
    pub split: Split,
    pub record: String,
    /// 1 for anomalous, 0 for normal.
    pub label: u8,
    pub mask: Option<String>,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub images: Vec<ManifestEntry>,
}

/// A fully loaded image: features, label and pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub category: String,
    pub label: bool,
    pub features: ImageFeatures,
    pub mask: Grid<bool>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)
            .map_err(|e| PflError::data(DataErrorKind::Malformed, format!("manifest: {e}")))?;
        if m.version != MANIFEST_VERSION {
            return Err(PflError::data(
                DataErrorKind::Malformed,
                format!("manifest version {} unsupported", m.version),
            ));
        }
        for e in &m.images {
            if e.label > 1 {
                return Err(PflError::data(
                    DataErrorKind::Malformed,
                    format!("{}: label must be 0 or 1", e.id),
                ));
            }
            if e.height == 0 || e.width == 0 {
                return Err(PflError::data(
                    DataErrorKind::Malformed,
                    format!("{}: image size must be positive", e.id),
                ));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                PflError::data(
                    DataErrorKind::MissingFile,
                    format!("{}: not found", path.display()),
                )
            } else {
                PflError::io(path, e)
            }
        })?;
        Manifest::parse(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.images.iter().filter(move |e| e.split == split)
    }

    /// Every inconsistency found, in manifest order. An empty list means the
    /// dataset is usable.
    pub fn validate(&self, base: &Path) -> Vec<PflError> {
        let mut problems = Vec::new();
        let mut reference: Option<(String, RecordHeader)> = None;
        for e in &self.images {
            if let Err(err) = check_entry(e, base, &mut reference) {
                problems.push(err);
            }
        }
        problems
    }

    /// Ground-truth masks of `split` in manifest order, all-false where the
    /// manifest has none. Records are not read.
    pub fn masks(&self, base: &Path, split: Split) -> Result<Vec<Grid<bool>>> {
        self.entries(split)
            .map(|e| Ok(read_mask(e, base)?.unwrap_or_else(|| empty_mask(e))))
            .collect()
    }

    /// Loads and validates every entry of `split`.
    pub fn load_split(&self, base: &Path, split: Split) -> Result<Vec<Sample>> {
        let mut reference = None;
        self.entries(split)
            .map(|e| {
                check_entry(e, base, &mut reference)?;
                load_sample(e, base)
            })
            .collect()
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

fn missing(path: &Path, id: &str) -> PflError {
    PflError::data(
        DataErrorKind::MissingFile,
        format!("{id}: {} does not exist", path.display()),
    )
}

fn malformed(id: &str, err: PflError) -> PflError {
    PflError::data(DataErrorKind::Malformed, format!("{id}: {err}"))
}

fn read_mask(e: &ManifestEntry, base: &Path) -> Result<Option<Grid<bool>>> {
    let Some(rel) = &e.mask else {
        return Ok(None);
    };
    let path = resolve(base, rel);
    if !path.is_file() {
        return Err(missing(&path, &e.id));
    }
    let pgm = Pgm::read(&path).map_err(|err| malformed(&e.id, err))?;
    if pgm.width != e.width || pgm.height != e.height {
        return Err(PflError::data(
            DataErrorKind::ShapeMismatch,
            format!(
                "{}: mask is {}x{}, manifest says {}x{}",
                e.id, pgm.width, pgm.height, e.width, e.height
            ),
        ));
    }
    Ok(Some(pgm.to_mask()))
}

fn check_entry(
    e: &ManifestEntry,
    base: &Path,
    reference: &mut Option<(String, RecordHeader)>,
) -> Result<()> {
    let path = resolve(base, &e.record);
    if !path.is_file() {
        return Err(missing(&path, &e.id));
    }
    let record = read_record(&path).map_err(|err| malformed(&e.id, err))?;
    match reference {
        None => *reference = Some((e.id.clone(), record.header)),
        Some((first, h)) => {
            let a = (h.dim, h.layers, h.grid_h, h.grid_w, h.raw_dim);
            let r = record.header;
            if a != (r.dim, r.layers, r.grid_h, r.grid_w, r.raw_dim) {
                return Err(PflError::data(
                    DataErrorKind::ShapeMismatch,
                    format!(
                        "{}: record header {:?} differs from {first}'s {:?}",
                        e.id, r, h
                    ),
                ));
            }
        }
    }
    let mask = read_mask(e, base)?;
    if e.label == 0 && mask.as_ref().is_some_and(|m| m.values.iter().any(|&v| v)) {
        return Err(PflError::data(
            DataErrorKind::LabelMaskContradiction,
            format!(
                "{}: labelled normal but its mask marks anomalous pixels",
                e.id
            ),
        ));
    }
    Ok(())
}

fn empty_mask(e: &ManifestEntry) -> Grid<bool> {
    Grid {
        width: e.width,
        height: e.height,
        values: vec![false; e.width * e.height],
    }
}

fn load_sample(e: &ManifestEntry, base: &Path) -> Result<Sample> {
    let record = read_record(&resolve(base, &e.record)).map_err(|err| malformed(&e.id, err))?;
    let mask = read_mask(e, base)?.unwrap_or_else(|| empty_mask(e));
    Ok(Sample {
        id: e.id.clone(),
        category: e.category.clone(),
        label: e.label == 1,
        features: record.to_features(&e.category, e.height, e.width)?,
        mask,
    })
}

/// Directory against which a manifest's relative paths resolve.
pub fn manifest_base(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

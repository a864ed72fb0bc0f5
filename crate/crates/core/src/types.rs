//! Domain types shared by every module.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel box, half-open on the high side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::argument(format!(
                "degenerate box [{x0}, {y0}, {x1}, {y1}]: need x0 < x1 and y0 < y1"
            )));
        }
        Ok(BoundingBox { x0, y0, x1, y1 })
    }

    /// Checks the box against an image of `width` × `height` cells.
    pub fn check_within(&self, width: usize, height: usize) -> std::result::Result<(), String> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(format!(
                "degenerate box [{}, {}, {}, {}]",
                self.x0, self.y0, self.x1, self.y1
            ));
        }
        if self.x1 as usize > width || self.y1 as usize > height {
            return Err(format!(
                "box [{}, {}, {}, {}] exceeds {}x{} image",
                self.x0, self.y0, self.x1, self.y1, width, height
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0 as usize..self.x1 as usize).contains(&x)
            && (self.y0 as usize..self.y1 as usize).contains(&y)
    }
}

/// Dense image-like grid of real cells, stored row-major as `[y][x][channel]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let grid = Grid {
            height,
            width,
            channels,
            data,
        };
        grid.validate().map_err(Error::Shape)?;
        Ok(grid)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Grid {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err("grid dimensions must be positive".into());
        }
        let expected = self.height * self.width * self.channels;
        if self.data.len() != expected {
            return Err(format!(
                "grid {}x{}x{} needs {} cells, got {}",
                self.height,
                self.width,
                self.channels,
                expected,
                self.data.len()
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.width + x) * self.channels + ch
    }

    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.index(y, x, ch)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Ground-truth annotation of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSet {
    /// One flag per category.
    MultiLabel(Vec<bool>),
    SingleLabel(usize),
    /// Valence, arousal, dominance; each in [1, 10].
    Continuous([f64; 3]),
}

impl LabelSet {
    pub fn mode(&self) -> LabelMode {
        match self {
            LabelSet::MultiLabel(bits) => LabelMode::MultiLabel(bits.len()),
            LabelSet::SingleLabel(_) => LabelMode::SingleLabel,
            LabelSet::Continuous(_) => LabelMode::Continuous,
        }
    }

    pub fn validate(&self, split: Split) -> std::result::Result<(), String> {
        match self {
            LabelSet::MultiLabel(bits) => {
                if bits.is_empty() {
                    return Err("multi_label vector is empty".into());
                }
                if split == Split::Train && !bits.iter().any(|&b| b) {
                    return Err("training sample has no positive label".into());
                }
            }
            LabelSet::SingleLabel(_) => {}
            LabelSet::Continuous(vad) => {
                for (name, v) in ["valence", "arousal", "dominance"].iter().zip(vad) {
                    if !(1.0..=10.0).contains(v) {
                        return Err(format!("{name} = {v} outside [1, 10]"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether category `k` is active for this sample.
    pub fn has_class(&self, k: usize) -> bool {
        match self {
            LabelSet::MultiLabel(bits) => bits.get(k).copied().unwrap_or(false),
            LabelSet::SingleLabel(i) => *i == k,
            LabelSet::Continuous(_) => false,
        }
    }
}

/// Label variant without payload. Multi-label carries its category count; the
/// single-label category count is inferred from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelMode {
    MultiLabel(usize),
    SingleLabel,
    Continuous,
}

/// Pre-encoded subject and context blocks for symbolic (synthetic) samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRecord {
    pub subject: Vec<f64>,
    pub context: Vec<f64>,
}

/// The observable part of a sample.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleInput {
    Grid(Grid),
    /// Grid stored in a separate JSON file; loaded on demand.
    GridFile {
        path: PathBuf,
        width: usize,
        height: usize,
    },
    Synthetic(SyntheticRecord),
    /// Annotation-only entry (usable by the audit, not by training).
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub input: SampleInput,
    pub subject_box: Option<BoundingBox>,
    pub labels: LabelSet,
    pub split: Split,
    /// Scene/context category used by the bias audit.
    pub context_id: Option<String>,
}

impl Sample {
    pub fn grid(&self) -> Result<Option<Grid>> {
        match &self.input {
            SampleInput::Grid(g) => Ok(Some(g.clone())),
            SampleInput::GridFile { path, .. } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(format!("reading grid {}", path.display()), e))?;
                let grid: Grid = serde_json::from_str(&text).map_err(|e| Error::Validation {
                    sample: self.sample_id.clone(),
                    message: format!("grid file {}: {e}", path.display()),
                })?;
                grid.validate().map_err(|m| Error::Validation {
                    sample: self.sample_id.clone(),
                    message: m,
                })?;
                Ok(Some(grid))
            }
            _ => Ok(None),
        }
    }
}

/// Ordered collection of fixed-width feature rows keyed by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    rows: Vec<Vec<f32>>,
    row_ids: Vec<String>,
}

impl FeatureSet {
    pub fn new(dim: usize, rows: Vec<Vec<f32>>, row_ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("feature dim must be positive"));
        }
        if rows.len() != row_ids.len() {
            return Err(Error::shape(format!(
                "{} rows but {} row ids",
                rows.len(),
                row_ids.len()
            )));
        }
        for (row, id) in rows.iter().zip(&row_ids) {
            if row.len() != dim {
                return Err(Error::shape(format!(
                    "row `{id}` has {} entries, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    sample: id.clone(),
                    message: "non-finite feature value".into(),
                });
            }
            if id.contains('\n') {
                return Err(Error::Validation {
                    sample: id.clone(),
                    message: "row id contains a newline".into(),
                });
            }
        }
        Ok(FeatureSet { dim, rows, row_ids })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f32>] {
        &self.rows
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i]
    }

    /// Rows widened to f64 for numeric work.
    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect()
    }
}

pub(crate) fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Duplicate(id.to_string()));
        }
    }
    Ok(())
}

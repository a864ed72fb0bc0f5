//! Model-ready tensors built from synthetic records or manifest samples.

use ndarray::{Array2, Axis};

use crate::confounder::{mask_subject, ContextImage};
use crate::error::{Error, Result};
use crate::scm::{one_hot, SyntheticDataset};
use crate::types::{Grid, LabelMode, LabelSet, Sample, SampleInput};

/// Supervision targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Single { classes: Vec<usize>, n_classes: usize },
    /// 0/1 indicator rows.
    Multi(Array2<f64>),
    /// Valence/arousal/dominance rows.
    Continuous(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Single { classes, .. } => classes.len(),
            Targets::Multi(t) | Targets::Continuous(t) => t.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn label_mode(&self) -> LabelMode {
        match self {
            Targets::Single { .. } => LabelMode::SingleLabel,
            Targets::Multi(t) => LabelMode::MultiLabel(t.ncols()),
            Targets::Continuous(_) => LabelMode::Continuous,
        }
    }

    /// Width of the classifier output these targets need.
    pub fn n_outputs(&self) -> usize {
        match self {
            Targets::Single { n_classes, .. } => *n_classes,
            Targets::Multi(t) => t.ncols(),
            Targets::Continuous(_) => 3,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Single { classes, n_classes } => Targets::Single {
                classes: idx.iter().map(|&i| classes[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Multi(t) => Targets::Multi(t.select(Axis(0), idx)),
            Targets::Continuous(t) => Targets::Continuous(t.select(Axis(0), idx)),
        }
    }
}

/// Subject-branch inputs, context-branch inputs and targets for a set of
/// samples, plus a free-form tag (split or regime) carried into reports.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub ids: Vec<String>,
    pub subject: Array2<f64>,
    pub context: Array2<f64>,
    pub targets: Targets,
    pub tag: String,
}

fn rows_to_array(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    Array2::from_shape_vec((n, width), rows.concat()).expect("rows checked to share a width")
}

/// Keeps the box contents and zeroes everything outside it.
fn keep_subject(grid: &Grid, bbox: &crate::types::BoundingBox) -> Grid {
    let mut out = grid.clone();
    for y in 0..grid.height {
        for x in 0..grid.width {
            if !bbox.contains(x, y) {
                for ch in 0..grid.channels {
                    let i = grid.index(y, x, ch);
                    out.data[i] = 0.0;
                }
            }
        }
    }
    out
}

impl TrainData {
    pub fn from_synthetic(ds: &SyntheticDataset, tag: impl Into<String>) -> Self {
        let n = ds.records.len();
        let subject = rows_to_array(ds.records.iter().map(|r| one_hot(ds.n_s, r.s)).collect(), ds.n_s);
        let context = rows_to_array(ds.records.iter().map(|r| one_hot(ds.n_c, r.c)).collect(), ds.n_c);
        TrainData {
            ids: (0..n).map(|i| format!("r{i:06}")).collect(),
            subject,
            context,
            targets: Targets::Single {
                classes: ds.records.iter().map(|r| r.y).collect(),
                n_classes: ds.n_y,
            },
            tag: tag.into(),
        }
    }

    /// Converts manifest samples. Synthetic records feed their blocks
    /// directly. Grid samples feed the subject region to the subject branch
    /// and, when `mask` is set, the subject-masked grid to the context branch
    /// (the full grid otherwise). `n_classes` fixes the single-label output
    /// width; by default it is one more than the largest class seen.
    pub fn from_samples(samples: &[Sample], mask: bool, n_classes: Option<usize>, tag: impl Into<String>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Config("no samples to convert".into()))?;
        let mode = first.labels.mode();
        let mut subject_rows = Vec::with_capacity(samples.len());
        let mut context_rows = Vec::with_capacity(samples.len());
        for s in samples {
            if s.labels.mode() != mode {
                return Err(Error::Config(format!(
                    "sample `{}` has label mode {:?}, expected {:?}",
                    s.sample_id,
                    s.labels.mode(),
                    mode
                )));
            }
            let (sub, ctx) = match &s.input {
                SampleInput::Synthetic(rec) => (rec.subject.clone(), rec.context.clone()),
                SampleInput::None => {
                    return Err(Error::Validation {
                        sample: s.sample_id.clone(),
                        message: "sample has no model input".into(),
                    })
                }
                _ => {
                    let grid = s.grid()?.expect("grid input");
                    match &s.subject_box {
                        Some(bbox) => {
                            let ctx = if mask { mask_subject(&grid, bbox)? } else { grid.clone() };
                            (keep_subject(&grid, bbox).data, ctx.data)
                        }
                        None => (grid.data.clone(), grid.data),
                    }
                }
            };
            subject_rows.push(sub);
            context_rows.push(ctx);
        }
        let ds = subject_rows[0].len();
        let dc = context_rows[0].len();
        if let Some(i) = (0..samples.len()).find(|&i| subject_rows[i].len() != ds || context_rows[i].len() != dc) {
            return Err(Error::shape(format!(
                "sample `{}` input size differs from `{}`",
                samples[i].sample_id, first.sample_id
            )));
        }
        if ds == 0 || dc == 0 {
            return Err(Error::Config("subject and context inputs must be nonempty".into()));
        }
        let targets = match mode {
            LabelMode::SingleLabel => {
                let classes: Vec<usize> = samples
                    .iter()
                    .map(|s| match s.labels {
                        LabelSet::SingleLabel(k) => k,
                        _ => unreachable!("mode checked"),
                    })
                    .collect();
                let seen = classes.iter().max().map_or(0, |m| m + 1);
                let n_classes = n_classes.unwrap_or(seen);
                if seen > n_classes {
                    return Err(Error::Config(format!(
                        "class index {} out of range for {n_classes} classes",
                        seen - 1
                    )));
                }
                Targets::Single { classes, n_classes }
            }
            LabelMode::MultiLabel(k) => {
                let mut t = Array2::zeros((samples.len(), k));
                for (i, s) in samples.iter().enumerate() {
                    if let LabelSet::MultiLabel(bits) = &s.labels {
                        if bits.len() != k {
                            return Err(Error::shape(format!(
                                "sample `{}` has {} labels, expected {k}",
                                s.sample_id,
                                bits.len()
                            )));
                        }
                        for (j, &b) in bits.iter().enumerate() {
                            t[[i, j]] = b as u8 as f64;
                        }
                    }
                }
                Targets::Multi(t)
            }
            LabelMode::Continuous => {
                let mut t = Array2::zeros((samples.len(), 3));
                for (i, s) in samples.iter().enumerate() {
                    if let LabelSet::Continuous(v) = &s.labels {
                        for (j, &x) in v.iter().enumerate() {
                            t[[i, j]] = x;
                        }
                    }
                }
                Targets::Continuous(t)
            }
        };
        Ok(TrainData {
            ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
            subject: rows_to_array(subject_rows, ds),
            context: rows_to_array(context_rows, dc),
            targets,
            tag: tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn label_mode(&self) -> LabelMode {
        self.targets.label_mode()
    }

    /// Context-branch inputs as encoder inputs, one per sample.
    pub fn context_images(&self) -> Result<Vec<ContextImage>> {
        self.context
            .rows()
            .into_iter()
            .zip(&self.ids)
            .map(|(r, id)| ContextImage::from_record(&r.to_vec(), id.clone()))
            .collect()
    }
}

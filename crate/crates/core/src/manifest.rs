//! JSON-lines dataset manifests.
//!
//! One object per line. Required keys: `sample_id`, `labels`, `split`.
//! Optional keys: `grid` (inline image), `image_path` + `image_size` ([width,
//! height]; the path points at a JSON grid file, relative to the manifest),
//! `synthetic` (`{"subject": [..], "context": [..]}`), `subject_box`
//! (`[x0, y0, x1, y1]`), `context_id`. Blank lines and lines starting with `#`
//! are ignored.
//!
//! ```text
//! {"sample_id":"a","split":"train","labels":{"single_label":2},"synthetic":{"subject":[0,1],"context":[1,0]}}
//! {"sample_id":"b","split":"test","labels":{"multi_label":[true,false]},"grid":{"height":2,"width":2,"channels":1,"data":[1,1,1,1]},"subject_box":[0,0,1,1]}
//! ```

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::types::{
    check_unique_ids, BoundingBox, Grid, LabelSet, Sample, SampleInput, Split, SyntheticRecord,
};

const KNOWN_KEYS: &[&str] = &[
    "sample_id",
    "labels",
    "split",
    "grid",
    "image_path",
    "image_size",
    "synthetic",
    "subject_box",
    "context_id",
];

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base)
}

/// Parses manifest text; relative `image_path`s resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        samples.push(parse_entry(trimmed, line, base)?);
    }
    check_unique_ids(samples.iter().map(|s| s.sample_id.as_str()))?;
    Ok(samples)
}

fn schema(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn take<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, line: usize) -> Result<Option<T>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| schema(line, key, e.to_string())),
    }
}

fn require<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str, line: usize) -> Result<T> {
    take(obj, key, line)?.ok_or_else(|| schema(line, key, "missing required field"))
}

fn parse_entry(text: &str, line: usize, base: &Path) -> Result<Sample> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema(line, "<json>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| schema(line, "<json>", "entry is not an object"))?;
    if let Some(unknown) = obj.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(schema(line, unknown, "unknown field"));
    }

    let sample_id: String = require(obj, "sample_id", line)?;
    if sample_id.is_empty() || sample_id.contains('\n') {
        return Err(schema(line, "sample_id", "must be non-empty and single-line"));
    }
    let labels: LabelSet = require(obj, "labels", line)?;
    let split: Split = require(obj, "split", line)?;
    let grid: Option<Grid> = take(obj, "grid", line)?;
    let image_path: Option<String> = take(obj, "image_path", line)?;
    let image_size: Option<[usize; 2]> = take(obj, "image_size", line)?;
    let synthetic: Option<SyntheticRecord> = take(obj, "synthetic", line)?;
    let raw_box: Option<[u32; 4]> = take(obj, "subject_box", line)?;
    let context_id: Option<String> = take(obj, "context_id", line)?;

    let invalid = |message: String| Error::Validation {
        sample: sample_id.clone(),
        message,
    };

    labels.validate(split).map_err(invalid)?;

    let sources = grid.is_some() as u8 + image_path.is_some() as u8 + synthetic.is_some() as u8;
    if sources > 1 {
        return Err(invalid("at most one of grid, image_path, synthetic may be given".into()));
    }
    let input = match (grid, image_path, synthetic) {
        (Some(g), _, _) => {
            g.validate().map_err(invalid)?;
            SampleInput::Grid(g)
        }
        (_, Some(p), _) => {
            let [width, height] =
                image_size.ok_or_else(|| schema(line, "image_size", "required with image_path"))?;
            SampleInput::GridFile {
                path: base.join(p),
                width,
                height,
            }
        }
        (_, _, Some(rec)) => {
            if rec.subject.is_empty() || rec.context.is_empty() {
                return Err(invalid("synthetic subject/context blocks must be non-empty".into()));
            }
            if rec.subject.iter().chain(&rec.context).any(|v| !v.is_finite()) {
                return Err(invalid("non-finite synthetic feature".into()));
            }
            SampleInput::Synthetic(rec)
        }
        _ => SampleInput::None,
    };

    let subject_box = match raw_box {
        None => None,
        Some([x0, y0, x1, y1]) => {
            let b = BoundingBox { x0, y0, x1, y1 };
            let dims = match &input {
                SampleInput::Grid(g) => Some((g.width, g.height)),
                SampleInput::GridFile { width, height, .. } => Some((*width, *height)),
                _ => None,
            };
            match dims {
                Some((w, h)) => b.check_within(w, h).map_err(invalid)?,
                None => {
                    if x0 >= x1 || y0 >= y1 {
                        return Err(invalid(format!("degenerate box [{x0}, {y0}, {x1}, {y1}]")));
                    }
                }
            }
            Some(b)
        }
    };

    Ok(Sample {
        sample_id,
        input,
        subject_box,
        labels,
        split,
        context_id,
    })
}

/// Serializes one sample as a manifest line (no trailing newline).
///
/// `GridFile` paths are written as given; callers writing manifests to a new
/// directory are responsible for keeping them resolvable.
pub fn manifest_line(sample: &Sample) -> String {
    let mut obj = Map::new();
    obj.insert("sample_id".into(), Value::String(sample.sample_id.clone()));
    obj.insert("split".into(), serde_json::to_value(sample.split).expect("split"));
    obj.insert("labels".into(), serde_json::to_value(&sample.labels).expect("labels"));
    match &sample.input {
        SampleInput::Grid(g) => {
            obj.insert("grid".into(), serde_json::to_value(g).expect("grid"));
        }
        SampleInput::GridFile {
            path,
            width,
            height,
        } => {
            obj.insert("image_path".into(), Value::String(path.display().to_string()));
            obj.insert("image_size".into(), serde_json::json!([width, height]));
        }
        SampleInput::Synthetic(rec) => {
            obj.insert("synthetic".into(), serde_json::to_value(rec).expect("record"));
        }
        SampleInput::None => {}
    }
    if let Some(b) = sample.subject_box {
        obj.insert("subject_box".into(), serde_json::json!([b.x0, b.y0, b.x1, b.y1]));
    }
    if let Some(c) = &sample.context_id {
        obj.insert("context_id".into(), Value::String(c.clone()));
    }
    Value::Object(obj).to_string()
}

pub fn write_manifest(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_unique_ids(samples.iter().map(|s| s.sample_id.as_str()))?;
    let mut out = String::new();
    for s in samples {
        out.push_str(&manifest_line(s));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing manifest {}", path.display()), e))
}

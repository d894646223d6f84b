//! On-disk formats.
//!
//! * `<id>.seq.csv`: a `dim=<d>` header line, then one comma-separated frame per row.
//! * `<id>.seq.json`: optional sidecar with `frame_rate` and free-form metadata.
//! * `labels.csv`: rows `sequence_id,class_name,begin,end` (0-based, end-inclusive).
//! * `<class>.model.json`: versioned gesture model.
//!
//! Lines starting with `#` are comments in every CSV file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, FrameModels, GestureModel, LabeledInterval, Sequence, TrainingParams};
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u64 = 1;

const SEQ_SUFFIX: &str = ".seq.csv";
const SIDECAR_SUFFIX: &str = ".seq.json";
const LABELS_FILE: &str = "labels.csv";
const LABELS_HEADER: &str = "sequence_id,class_name,begin,end";

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses the body of a `.seq.csv` file. `file` is only used in error messages.
pub fn parse_sequence(id: &str, text: &str, file: &Path) -> Result<Sequence> {
    let mut lines = content_lines(text);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| Error::parse(file, 1, "missing `dim=<d>` header"))?;
    let dim: usize = header
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(file, header_line, format!("expected `dim=<d>`, found {header:?}")))?;
    let mut data = Vec::new();
    let mut frame = 0usize;
    for (line_no, line) in lines {
        frame += 1;
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(
                    file,
                    line_no,
                    format!("frame {frame}: invalid number {:?}", field.trim()),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(file, line_no, format!("frame {frame}: non-finite value")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != dim {
            return Err(Error::parse(
                file,
                line_no,
                format!("frame {frame}: expected {dim} values, found {got}"),
            ));
        }
    }
    if data.is_empty() {
        return Err(Error::parse(file, header_line, "sequence has no frames"));
    }
    Sequence::from_flat(id, dim, data)
}

fn format_sequence(seq: &Sequence) -> String {
    let mut out = String::with_capacity(seq.as_flat().len() * 12);
    let _ = writeln!(out, "dim={}", seq.dim());
    for frame in seq.frames() {
        for (i, v) in frame.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Sidecar {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    frame_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    metadata: Option<serde_json::Value>,
}

/// Reads `<dir>/<id>.seq.csv` and its optional sidecar.
pub fn load_sequence(path: &Path) -> Result<Sequence> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_suffix(SEQ_SUFFIX))
        .ok_or_else(|| Error::invalid(format!("{} is not a `*{SEQ_SUFFIX}` file", path.display())))?;
    let seq = parse_sequence(name, &read_to_string(path)?, path)?;
    let sidecar_path = path.with_file_name(format!("{name}{SIDECAR_SUFFIX}"));
    if sidecar_path.exists() {
        let sidecar: Sidecar = serde_json::from_str(&read_to_string(&sidecar_path)?).map_err(|e| Error::Json {
            file: sidecar_path.clone(),
            source: e,
        })?;
        return seq.with_frame_rate(sidecar.frame_rate);
    }
    Ok(seq)
}

/// Writes `<dir>/<id>.seq.csv`, plus a sidecar when there is metadata to record.
pub fn save_sequence(seq: &Sequence, dir: &Path, metadata: Option<&serde_json::Value>) -> Result<PathBuf> {
    let path = dir.join(format!("{}{SEQ_SUFFIX}", seq.id()));
    write_string(&path, &format_sequence(seq))?;
    if seq.frame_rate().is_some() || metadata.is_some() {
        let sidecar = Sidecar {
            id: seq.id().to_string(),
            frame_rate: seq.frame_rate(),
            metadata: metadata.cloned(),
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        write_string(&dir.join(format!("{}{SIDECAR_SUFFIX}", seq.id())), &(text + "\n"))?;
    }
    Ok(path)
}

/// Parses `labels.csv` into per-sequence interval lists.
pub fn parse_labels(text: &str, file: &Path) -> Result<BTreeMap<String, Vec<LabeledInterval>>> {
    let mut out: BTreeMap<String, Vec<LabeledInterval>> = BTreeMap::new();
    for (line_no, line) in content_lines(text) {
        if line == LABELS_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                file,
                line_no,
                format!("expected 4 fields `{LABELS_HEADER}`, found {}", fields.len()),
            ));
        }
        let index = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(file, line_no, format!("invalid {what} index {s:?}")))
        };
        let begin = index(fields[2], "begin")?;
        let end = index(fields[3], "end")?;
        if fields[1].is_empty() {
            return Err(Error::parse(file, line_no, "empty class name"));
        }
        out.entry(fields[0].to_string())
            .or_default()
            .push(LabeledInterval::new(fields[1], begin, end));
    }
    Ok(out)
}

/// Loads every `*.seq.csv` in `dir` (sorted by file name) and `dir/labels.csv`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(SEQ_SUFFIX))
        {
            paths.push(path);
        }
    }
    paths.sort();
    let sequences = paths.iter().map(|p| load_sequence(p)).collect::<Result<Vec<_>>>()?;
    if let Some(first) = sequences.first() {
        if let Some(bad) = sequences.iter().find(|s| s.dim() != first.dim()) {
            return Err(Error::invalid(format!(
                "sequence {:?} has dim {} but {:?} has dim {}",
                bad.id(),
                bad.dim(),
                first.id(),
                first.dim()
            )));
        }
    }
    let labels_path = dir.join(LABELS_FILE);
    let labels = parse_labels(&read_to_string(&labels_path)?, &labels_path)?;
    Dataset::new(sequences, labels, BTreeSet::new())
}

/// Writes a dataset in the layout `load_dataset` reads. `metadata`, when given,
/// goes into every sidecar and as a comment line into `labels.csv`.
pub fn save_dataset(dataset: &Dataset, dir: &Path, metadata: Option<&serde_json::Value>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for seq in dataset.sequences() {
        save_sequence(seq, dir, metadata)?;
    }
    let mut text = String::new();
    if let Some(meta) = metadata {
        let _ = writeln!(text, "# {meta}");
    }
    let _ = writeln!(text, "{LABELS_HEADER}");
    for seq in dataset.sequences() {
        for iv in dataset.labels_for(seq.id()) {
            let _ = writeln!(text, "{},{},{},{}", seq.id(), iv.class_name, iv.begin, iv.end);
        }
    }
    write_string(&dir.join(LABELS_FILE), &text)
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    class_name: String,
    reference_id: String,
    dim: usize,
    model_length: usize,
    threshold: Option<f64>,
    training: TrainingParams,
    #[serde(flatten)]
    frames: FrameModels,
}

/// Canonical JSON text of a model; identical models produce identical bytes.
pub fn model_to_json(model: &GestureModel) -> String {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        class_name: model.class_name.clone(),
        reference_id: model.reference_id.clone(),
        dim: model.dim,
        model_length: model.model_length(),
        threshold: model.threshold,
        training: model.training.clone(),
        frames: model.frames.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    text
}

pub fn save_model(model: &GestureModel, path: &Path) -> Result<()> {
    model.validate()?;
    write_string(path, &model_to_json(model))
}

pub fn load_model(path: &Path) -> Result<GestureModel> {
    let text = read_to_string(path)?;
    let json_err = |e| Error::Json {
        file: path.to_path_buf(),
        source: e,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_err)?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::invalid(format!("{}: missing format_version", path.display())))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let file: ModelFile = serde_json::from_str(&text).map_err(json_err)?;
    if file.model_length != file.frames.len() {
        return Err(Error::invalid(format!(
            "{}: model_length {} but {} frame models",
            path.display(),
            file.model_length,
            file.frames.len()
        )));
    }
    let model = GestureModel {
        class_name: file.class_name,
        reference_id: file.reference_id,
        dim: file.dim,
        threshold: file.threshold,
        training: file.training,
        frames: file.frames,
    };
    model.validate()?;
    Ok(model)
}

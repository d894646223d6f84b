//! Sequences, labelled intervals, datasets and trained gesture models.
//!
//! All types validate on construction and are immutable afterwards.

mod io;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ape::{ApeConfig, ApeModel};
use crate::gmm::{GmmConfig, GmmModel};
use crate::util::check_finite;
use crate::{Error, Result};

pub use io::{
    load_dataset, load_model, load_sequence, model_to_json, parse_labels, parse_sequence, save_dataset, save_model,
    save_sequence, MODEL_FORMAT_VERSION,
};

/// An ordered list of fixed-dimension feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    id: String,
    dim: usize,
    data: Vec<f64>,
    frame_rate: Option<f64>,
}

impl Sequence {
    pub fn new<F: AsRef<[f64]>>(id: impl Into<String>, frames: &[F]) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("sequence has no frames"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(dim * frames.len());
        for frame in frames {
            data.extend_from_slice(frame.as_ref());
            if frame.as_ref().len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: frame.as_ref().len(),
                });
            }
        }
        Self::from_flat(id, dim, data)
    }

    /// Builds a sequence from row-major frame data.
    pub fn from_flat(id: impl Into<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sequence dimension must be positive"));
        }
        if data.is_empty() {
            return Err(Error::Empty("sequence has no frames"));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if !check_finite(&data) {
            return Err(Error::invalid("sequence contains non-finite values"));
        }
        Ok(Self {
            id: id.into(),
            dim,
            data,
            frame_rate: None,
        })
    }

    pub fn with_frame_rate(mut self, frame_rate: Option<f64>) -> Result<Self> {
        if let Some(rate) = frame_rate {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(Error::invalid(format!("invalid frame rate {rate}")));
            }
        }
        self.frame_rate = frame_rate;
        Ok(self)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    /// Always false; sequences hold at least one frame.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_rate(&self) -> Option<f64> {
        self.frame_rate
    }

    pub fn frame(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Frames `begin..=end` as a new sequence.
    pub fn slice(&self, id: impl Into<String>, begin: usize, end: usize) -> Result<Self> {
        if begin > end || end >= self.len() {
            return Err(Error::OutOfRange {
                index: end,
                valid: format!("0..{} with begin <= end", self.len()),
            });
        }
        let data = self.data[begin * self.dim..(end + 1) * self.dim].to_vec();
        Ok(Self {
            id: id.into(),
            dim: self.dim,
            data,
            frame_rate: self.frame_rate,
        })
    }
}

/// A labelled occurrence of a class, `begin..=end` in frame indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledInterval {
    pub class_name: String,
    pub begin: usize,
    pub end: usize,
}

impl LabeledInterval {
    pub fn new(class_name: impl Into<String>, begin: usize, end: usize) -> Self {
        Self {
            class_name: class_name.into(),
            begin,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sequences: Vec<Sequence>,
    labels: BTreeMap<String, Vec<LabeledInterval>>,
    class_names: BTreeSet<String>,
}

impl Dataset {
    /// Validates referential integrity, interval bounds and per-class overlap.
    ///
    /// `class_names` is extended with every class referenced by a label.
    pub fn new(
        sequences: Vec<Sequence>,
        labels: BTreeMap<String, Vec<LabeledInterval>>,
        mut class_names: BTreeSet<String>,
    ) -> Result<Self> {
        let mut lengths = BTreeMap::new();
        for seq in &sequences {
            if lengths.insert(seq.id().to_string(), seq.len()).is_some() {
                return Err(Error::invalid(format!("duplicate sequence id {:?}", seq.id())));
            }
        }
        let mut labels = labels;
        for (seq_id, intervals) in labels.iter_mut() {
            let len = *lengths
                .get(seq_id)
                .ok_or_else(|| Error::UnknownSequence(seq_id.clone()))?;
            for iv in intervals.iter() {
                if iv.begin > iv.end || iv.end >= len {
                    return Err(Error::invalid(format!(
                        "label {}..{} for class {:?} out of range for sequence {:?} of length {}",
                        iv.begin, iv.end, iv.class_name, seq_id, len
                    )));
                }
                class_names.insert(iv.class_name.clone());
            }
            intervals.sort();
            for pair in intervals.windows(2) {
                if pair[0].class_name == pair[1].class_name && pair[1].begin <= pair[0].end {
                    return Err(Error::invalid(format!(
                        "overlapping {:?} labels on sequence {:?}: {}..{} and {}..{}",
                        pair[0].class_name, seq_id, pair[0].begin, pair[0].end, pair[1].begin, pair[1].end
                    )));
                }
            }
        }
        labels.retain(|_, v| !v.is_empty());
        Ok(Self {
            sequences,
            labels,
            class_names,
        })
    }

    pub fn sequences(&self) -> &[Sequence] {
        &self.sequences
    }

    pub fn sequence(&self, id: &str) -> Option<&Sequence> {
        self.sequences.iter().find(|s| s.id() == id)
    }

    pub fn labels(&self) -> &BTreeMap<String, Vec<LabeledInterval>> {
        &self.labels
    }

    pub fn labels_for(&self, seq_id: &str) -> &[LabeledInterval] {
        self.labels.get(seq_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn class_names(&self) -> &BTreeSet<String> {
        &self.class_names
    }

    pub fn dim(&self) -> Option<usize> {
        self.sequences.first().map(Sequence::dim)
    }

    /// Every labelled interval cut out as its own sequence, grouped by class.
    ///
    /// Sample ids are `<sequence>:<begin>-<end>`; order follows sequence order
    /// then interval order.
    pub fn samples_by_class(&self) -> Result<BTreeMap<String, Vec<Sequence>>> {
        let mut out: BTreeMap<String, Vec<Sequence>> = BTreeMap::new();
        for seq in &self.sequences {
            for iv in self.labels_for(seq.id()) {
                let id = format!("{}:{}-{}", seq.id(), iv.begin, iv.end);
                out.entry(iv.class_name.clone())
                    .or_default()
                    .push(seq.slice(id, iv.begin, iv.end)?);
            }
        }
        Ok(out)
    }
}

/// Per-reference-frame one-class models; a model never mixes variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "per_frame_models", rename_all = "lowercase")]
pub enum FrameModels {
    Gmm(Vec<GmmModel>),
    Ape(Vec<ApeModel>),
}

impl FrameModels {
    pub fn len(&self) -> usize {
        match self {
            FrameModels::Gmm(v) => v.len(),
            FrameModels::Ape(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            FrameModels::Gmm(_) => "gmm",
            FrameModels::Ape(_) => "ape",
        }
    }
}

/// Parameters a gesture model was trained with, kept so it can be retrained
/// (for leave-one-out calibration) and reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub seed: u64,
    /// How the reference sample was picked; always `"sorted_by_length[floor(n/2)]"`.
    pub reference_rule: String,
    pub sample_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gmm: Option<GmmConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ape: Option<ApeConfig>,
}

pub const REFERENCE_RULE: &str = "sorted_by_length[floor(n/2)]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureModel {
    class_name: String,
    reference_id: String,
    dim: usize,
    threshold: Option<f64>,
    training: TrainingParams,
    #[serde(flatten)]
    frames: FrameModels,
}

impl GestureModel {
    pub fn new(
        class_name: impl Into<String>,
        reference_id: impl Into<String>,
        dim: usize,
        frames: FrameModels,
        training: TrainingParams,
    ) -> Result<Self> {
        let model = Self {
            class_name: class_name.into(),
            reference_id: reference_id.into(),
            dim,
            threshold: None,
            training,
            frames,
        };
        model.validate()?;
        Ok(model)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Empty("gesture model has no frame models"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("gesture model dimension must be positive"));
        }
        let dims_ok = match &self.frames {
            FrameModels::Gmm(v) => v.iter().all(|g| g.dim() == self.dim),
            FrameModels::Ape(v) => v.iter().all(|a| a.dim() == self.dim),
        };
        if !dims_ok {
            return Err(Error::invalid("frame model dimension differs from gesture model"));
        }
        if let Some(t) = self.threshold {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid(format!("threshold must be finite and > 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = Some(threshold);
        self.validate()?;
        Ok(self)
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn reference_id(&self) -> &str {
        &self.reference_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_length(&self) -> usize {
        self.frames.len()
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn frames(&self) -> &FrameModels {
        &self.frames
    }

    pub fn training(&self) -> &TrainingParams {
        &self.training
    }

    /// Soft distance of `q` to the one-class model of reference frame `t`.
    pub fn soft_distance(&self, t: usize, q: &[f64]) -> Result<f64> {
        match &self.frames {
            FrameModels::Gmm(v) => v[t].soft_distance(q),
            FrameModels::Ape(v) => v[t].soft_distance(q),
        }
    }
}

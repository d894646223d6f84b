//! Train, calibrate, spot and evaluate, composed for whole datasets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::build_warped_set;
use crate::ape::train_ape_gesture_model;
use crate::eval::{self, BinaryTimeline, EvalReport, EvalRow};
use crate::gmm::train_gmm_gesture_model;
use crate::seqmodel::TrainingParams;
use crate::spotting::{calibrate_threshold, spot_with, TemplateScorer};
use crate::util::mix_seed;
use crate::{
    ApeConfig, CalibrationReport, Dataset, DetectionResult, Error, FrameScorer, GestureModel, GmmConfig, Result,
    Sequence, SpotConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gmm,
    Ape,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmm" => Ok(Variant::Gmm),
            "ape" => Ok(Variant::Ape),
            other => Err(Error::invalid(format!("unknown variant {other:?}; use gmm or ape"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub gmm: GmmConfig,
    pub ape: ApeConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Gmm,
            gmm: GmmConfig::default(),
            ape: ApeConfig::default(),
            seed: 0,
        }
    }
}

/// Trains one class without a threshold.
pub fn train_model(class_name: &str, samples: &[Sequence], config: &TrainConfig) -> Result<GestureModel> {
    let warped = build_warped_set(class_name, samples)?;
    match config.variant {
        Variant::Gmm => train_gmm_gesture_model(&warped, &config.gmm, config.seed),
        Variant::Ape => train_ape_gesture_model(&warped, &config.ape, config.seed),
    }
}

/// Trains again with the parameters recorded in `training`.
pub fn retrain(class_name: &str, training: &TrainingParams, samples: &[Sequence]) -> Result<GestureModel> {
    let warped = build_warped_set(class_name, samples)?;
    match (&training.gmm, &training.ape) {
        (Some(g), None) => train_gmm_gesture_model(&warped, g, training.seed),
        (None, Some(a)) => train_ape_gesture_model(&warped, a, training.seed),
        _ => Err(Error::invalid("training parameters must name exactly one variant")),
    }
}

/// Leave-one-out threshold for `model`, retraining on each `N-1` subset with
/// the model's own parameters.
pub fn calibrate_model(model: GestureModel, samples: &[Sequence]) -> Result<(GestureModel, CalibrationReport)> {
    let class = model.class_name().to_string();
    let training = model.training().clone();
    let report = calibrate_threshold(samples, |rest: &[Sequence]| retrain(&class, &training, rest))?;
    Ok((model.with_threshold(report.threshold)?, report))
}

/// Seed used for the `class_index`-th class (in class-name order) of a run.
pub fn class_seed(run_seed: u64, class_index: usize) -> u64 {
    mix_seed(run_seed, class_index as u64)
}

/// Trains every class of `train` without thresholds; class `i` (in name
/// order) uses [`class_seed`]`(config.seed, i)`.
pub fn train_classes(train: &Dataset, config: &TrainConfig) -> Result<BTreeMap<String, GestureModel>> {
    let mut out = BTreeMap::new();
    for (ci, (class, samples)) in train.samples_by_class()?.into_iter().enumerate() {
        let cfg = TrainConfig {
            seed: class_seed(config.seed, ci),
            ..config.clone()
        };
        out.insert(class.clone(), train_model(&class, &samples, &cfg)?);
    }
    Ok(out)
}

/// [`train_classes`] followed by leave-one-out calibration of each class.
pub fn train_all(train: &Dataset, config: &TrainConfig) -> Result<BTreeMap<String, (GestureModel, CalibrationReport)>> {
    let by_class = train.samples_by_class()?;
    let mut out = BTreeMap::new();
    for (class, model) in train_classes(train, config)? {
        out.insert(class.clone(), calibrate_model(model, &by_class[&class])?);
    }
    Ok(out)
}

/// The compared spotting methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dtw-random")]
    DtwRandom,
    #[serde(rename = "dtw-mean")]
    DtwMean,
    #[serde(rename = "dtw-gmm")]
    DtwGmm,
    #[serde(rename = "dtw-ape")]
    DtwApe,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DtwRandom, Method::DtwMean, Method::DtwGmm, Method::DtwApe];

    pub fn name(self) -> &'static str {
        match self {
            Method::DtwRandom => "dtw-random",
            Method::DtwMean => "dtw-mean",
            Method::DtwGmm => "dtw-gmm",
            Method::DtwApe => "dtw-ape",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Template of the random baseline: one sample drawn with `seed`.
pub fn random_template(class_name: &str, samples: &[Sequence], seed: u64) -> Result<TemplateScorer> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to draw a template from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = rng.random_range(0..samples.len());
    Ok(TemplateScorer::new(class_name, samples[pick].clone()))
}

/// Template of the mean baseline: frame-wise mean of the warped samples.
pub fn mean_template(class_name: &str, samples: &[Sequence]) -> Result<TemplateScorer> {
    let warped = build_warped_set(class_name, samples)?;
    Ok(TemplateScorer::new(
        class_name,
        warped.mean_sequence(format!("{class_name}-mean"))?,
    ))
}

/// A calibrated scorer of any method.
pub enum Detector {
    Model(GestureModel),
    Template(TemplateScorer, f64),
}

impl Detector {
    pub fn scorer(&self) -> &dyn FrameScorer {
        match self {
            Detector::Model(m) => m,
            Detector::Template(t, _) => t,
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            Detector::Model(m) => m.threshold().expect("calibrated"),
            Detector::Template(_, b) => *b,
        }
    }

    pub fn spot(&self, query: &Sequence, config: &SpotConfig) -> Result<Vec<DetectionResult>> {
        spot_with(self.scorer(), self.threshold(), query, config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub dont_care: Vec<usize>,
    pub gmm: GmmConfig,
    pub ape: ApeConfig,
    pub spot: SpotConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            dont_care: vec![0],
            gmm: GmmConfig::default(),
            ape: ApeConfig::default(),
            spot: SpotConfig::default(),
            seed: 0,
        }
    }
}

/// Trains and calibrates `method` on one class.
pub fn build_detector(
    method: Method,
    class_index: usize,
    class_name: &str,
    samples: &[Sequence],
    config: &EvalConfig,
) -> Result<Detector> {
    let seed = class_seed(config.seed, class_index);
    match method {
        Method::DtwGmm | Method::DtwApe => {
            let train = TrainConfig {
                variant: if method == Method::DtwGmm {
                    Variant::Gmm
                } else {
                    Variant::Ape
                },
                gmm: config.gmm.clone(),
                ape: config.ape.clone(),
                seed,
            };
            let model = train_model(class_name, samples, &train)?;
            Ok(Detector::Model(calibrate_model(model, samples)?.0))
        }
        Method::DtwRandom => {
            let report = calibrate_threshold(samples, |rest: &[Sequence]| random_template(class_name, rest, seed))?;
            Ok(Detector::Template(
                random_template(class_name, samples, seed)?,
                report.threshold,
            ))
        }
        Method::DtwMean => {
            let report = calibrate_threshold(samples, |rest: &[Sequence]| mean_template(class_name, rest))?;
            Ok(Detector::Template(
                mean_template(class_name, samples)?,
                report.threshold,
            ))
        }
    }
}

/// Detections of every class on every test sequence, keyed by sequence id.
pub type DetectionsBySequence = BTreeMap<String, Vec<DetectionResult>>;

/// Overlap and accuracy of one class on a set of streams.
///
/// Accuracy pools instances over streams. Overlap is the frame-weighted
/// Jaccard index of all streams taken together.
pub fn score_class(
    class_name: &str,
    test: &Dataset,
    detections: &DetectionsBySequence,
    dont_care: usize,
) -> Result<(f64, f64)> {
    let (mut matched, mut total) = (0usize, 0usize);
    let (mut inter, mut union) = (0usize, 0usize);
    for seq in test.sequences() {
        let labels: Vec<_> = test
            .labels_for(seq.id())
            .iter()
            .filter(|l| l.class_name == class_name)
            .cloned()
            .collect();
        let dets: Vec<DetectionResult> = detections
            .get(seq.id())
            .map(|d| d.iter().filter(|d| d.class_name == class_name).cloned().collect())
            .unwrap_or_default();
        total += labels.len();
        matched += eval::match_instances(&dets, &labels, seq.len(), dont_care)?.len();
        let g = BinaryTimeline::from_intervals(seq.len(), labels.iter().map(|l| (l.begin, l.end)))?;
        let p = BinaryTimeline::from_intervals(seq.len(), dets.iter().map(|d| (d.begin, d.end)))?;
        let masked = eval::dont_care_mask(&g, dont_care);
        let gs: Vec<_> = g.active().difference(&masked).copied().collect();
        let ps: std::collections::BTreeSet<_> = p.active().difference(&masked).copied().collect();
        let i = gs.iter().filter(|t| ps.contains(t)).count();
        inter += i;
        union += gs.len() + ps.len() - i;
    }
    if total == 0 {
        return Err(Error::invalid(format!("class {class_name:?} has no test instances")));
    }
    let overlap = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    Ok((overlap, matched as f64 / total as f64))
}

/// Everything `evaluate` produced.
pub struct Evaluation {
    pub report: EvalReport,
    pub detections: BTreeMap<Method, DetectionsBySequence>,
}

/// Trains every method on `train`, spots on every sequence of `test`, and
/// scores each (class, method, dont_care) combination.
pub fn evaluate(train: &Dataset, test: &Dataset, config: &EvalConfig) -> Result<Evaluation> {
    if config.methods.is_empty() || config.dont_care.is_empty() {
        return Err(Error::invalid(
            "evaluation needs at least one method and one dont_care value",
        ));
    }
    let by_class = train.samples_by_class()?;
    let mut detections: BTreeMap<Method, DetectionsBySequence> = BTreeMap::new();
    for &method in &config.methods {
        let per_seq = detections.entry(method).or_default();
        for (ci, (class, samples)) in by_class.iter().enumerate() {
            let detector = build_detector(method, ci, class, samples, config)?;
            for seq in test.sequences() {
                per_seq
                    .entry(seq.id().to_string())
                    .or_default()
                    .extend(detector.spot(seq, &config.spot)?);
            }
        }
    }
    let mut report = EvalReport::default();
    for class in by_class.keys() {
        for &dc in &config.dont_care {
            for &method in &config.methods {
                let (overlap, accuracy) = score_class(class, test, &detections[&method], dc)?;
                report.rows.push(EvalRow {
                    class: class.clone(),
                    method: method.name().to_string(),
                    dont_care: dc,
                    overlap,
                    accuracy,
                });
            }
        }
    }
    Ok(Evaluation { report, detections })
}

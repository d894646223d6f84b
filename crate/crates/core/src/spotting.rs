//! Begin-end spotting over an unbounded stream, and leave-one-out threshold
//! calibration.
//!
//! A [`Spotter`] advances an open-start [`CostMatrix`] one query frame at a
//! time. When `M(m, k)` drops below the threshold the detector keeps going
//! while the bottom cell is still strictly decreasing, emits at that local
//! minimum, backtracks the path to find the begin frame, and restarts the
//! matrix after the detection.

use serde::{Deserialize, Serialize};

use crate::dtw::{euclidean_unchecked, CostMatrix, StartMode, WarpingPath};
use crate::seqmodel::FrameModels;
use crate::{Error, GestureModel, Result, Sequence};

/// Anything that can turn one query frame into the `m` row costs of a model.
pub trait FrameScorer {
    fn class_name(&self) -> &str;

    /// Number of model rows `m`.
    fn rows(&self) -> usize;

    fn dim(&self) -> usize;

    /// Writes the cost of `frame` against every model row into `out`.
    /// `frame.len() == self.dim()` and `out.len() == self.rows()` are guaranteed.
    fn row_costs(&self, frame: &[f64], out: &mut [f64]);
}

impl FrameScorer for GestureModel {
    fn class_name(&self) -> &str {
        GestureModel::class_name(self)
    }

    fn rows(&self) -> usize {
        self.model_length()
    }

    fn dim(&self) -> usize {
        GestureModel::dim(self)
    }

    fn row_costs(&self, frame: &[f64], out: &mut [f64]) {
        match self.frames() {
            FrameModels::Gmm(models) => {
                for (slot, m) in out.iter_mut().zip(models) {
                    *slot = (-m.membership_unchecked(frame)).exp();
                }
            }
            FrameModels::Ape(models) => {
                for (slot, m) in out.iter_mut().zip(models) {
                    *slot = (-m.membership_unchecked(frame)).exp();
                }
            }
        }
    }
}

/// A single template compared with the Euclidean frame cost.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateScorer {
    class_name: String,
    template: Sequence,
}

impl TemplateScorer {
    pub fn new(class_name: impl Into<String>, template: Sequence) -> Self {
        Self {
            class_name: class_name.into(),
            template,
        }
    }

    pub fn template(&self) -> &Sequence {
        &self.template
    }
}

impl FrameScorer for TemplateScorer {
    fn class_name(&self) -> &str {
        &self.class_name
    }

    fn rows(&self) -> usize {
        self.template.len()
    }

    fn dim(&self) -> usize {
        self.template.dim()
    }

    fn row_costs(&self, frame: &[f64], out: &mut [f64]) {
        for (slot, t) in out.iter_mut().zip(self.template.frames()) {
            *slot = euclidean_unchecked(t, frame);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub class_name: String,
    /// First frame of the match (0-based, inclusive).
    pub begin: usize,
    /// Last frame of the match (0-based, inclusive).
    pub end: usize,
    /// Un-normalized `M(m, k)` at the emitted end column.
    pub terminal_cost: f64,
    pub path: WarpingPath,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpotConfig {
    /// Emit at the first column under the threshold instead of at the
    /// following local minimum.
    pub strict_first_hit: bool,
    /// Columns of move tags kept for backtracking; `None` means `4 * m`.
    pub buffer_depth: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    col: usize,
    cost: f64,
}

/// Streaming detector for one (model, stream) pair.
pub struct Spotter<'a, S: FrameScorer + ?Sized> {
    scorer: &'a S,
    threshold: f64,
    strict: bool,
    matrix: CostMatrix,
    costs: Vec<f64>,
    pending: Option<Pending>,
}

impl<'a, S: FrameScorer + ?Sized> Spotter<'a, S> {
    pub fn new(scorer: &'a S, threshold: f64, config: &SpotConfig) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::invalid(format!(
                "threshold must be finite and > 0, got {threshold}"
            )));
        }
        let rows = scorer.rows();
        let depth = config.buffer_depth.unwrap_or(4 * rows.max(1));
        Ok(Self {
            scorer,
            threshold,
            strict: config.strict_first_hit,
            matrix: CostMatrix::new(rows, StartMode::Open, Some(depth))?,
            costs: vec![0.0; rows],
            pending: None,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn matrix(&self) -> &CostMatrix {
        &self.matrix
    }

    /// Feeds one query frame; returns a detection if one completes here.
    pub fn push(&mut self, frame: &[f64]) -> Result<Option<DetectionResult>> {
        if frame.len() != self.scorer.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.scorer.dim(),
                got: frame.len(),
            });
        }
        self.scorer.row_costs(frame, &mut self.costs);
        let mut emitted = None;
        if let Some(p) = self.pending {
            let mut probe = self.matrix.clone_column_state();
            let next = probe.push_column(&self.costs)?;
            if next < p.cost {
                self.matrix.push_column(&self.costs)?;
                self.pending = Some(Pending {
                    col: self.matrix.cols(),
                    cost: next,
                });
                return Ok(None);
            }
            emitted = Some(self.emit(p)?);
        }
        let bottom = self.matrix.push_column(&self.costs)?;
        if bottom < self.threshold {
            let hit = Pending {
                col: self.matrix.cols(),
                cost: bottom,
            };
            if self.strict {
                debug_assert!(emitted.is_none());
                emitted = Some(self.emit(hit)?);
            } else {
                self.pending = Some(hit);
            }
        }
        Ok(emitted)
    }

    /// Flushes a detection still waiting for its local minimum.
    pub fn finish(&mut self) -> Result<Option<DetectionResult>> {
        match self.pending {
            Some(p) => self.emit(p).map(Some),
            None => Ok(None),
        }
    }

    fn emit(&mut self, p: Pending) -> Result<DetectionResult> {
        debug_assert_eq!(p.col, self.matrix.cols());
        let (path, clipped) = self.matrix.backtrack_clipped(p.col)?;
        if clipped {
            log::warn!(
                "{}: path for detection ending at frame {} exceeds the move buffer; begin clipped",
                self.scorer.class_name(),
                p.col - 1
            );
        }
        let begin_col = path.first().expect("non-empty path").1;
        self.pending = None;
        self.matrix.reset();
        Ok(DetectionResult {
            class_name: self.scorer.class_name().to_string(),
            begin: begin_col - 1,
            end: p.col - 1,
            terminal_cost: p.cost,
            path,
        })
    }
}

impl CostMatrix {
    /// A move-less copy of the current column, for probing the next value.
    fn clone_column_state(&self) -> CostMatrix {
        let mut probe = CostMatrix::new(self.rows(), self.mode(), Some(1)).expect("rows > 0");
        probe.load_column(self.column());
        probe
    }
}

/// Runs a fresh spotter over a finite sequence.
pub fn spot_with<S: FrameScorer + ?Sized>(
    scorer: &S,
    threshold: f64,
    query: &Sequence,
    config: &SpotConfig,
) -> Result<Vec<DetectionResult>> {
    let mut spotter = Spotter::new(scorer, threshold, config)?;
    let mut out = Vec::new();
    for frame in query.frames() {
        out.extend(spotter.push(frame)?);
    }
    out.extend(spotter.finish()?);
    Ok(out)
}

/// [`spot_with`] using the model's calibrated threshold.
pub fn spot(model: &GestureModel, query: &Sequence, config: &SpotConfig) -> Result<Vec<DetectionResult>> {
    let threshold = model.threshold().ok_or_else(|| {
        Error::invalid(format!(
            "model {:?} has no threshold; calibrate it first",
            model.class_name()
        ))
    })?;
    spot_with(model, threshold, query, config)
}

/// Un-normalized open-start cost `M(m, n)` of a whole sequence against a scorer.
pub fn terminal_cost<S: FrameScorer + ?Sized>(scorer: &S, sample: &Sequence) -> Result<f64> {
    if sample.dim() != scorer.dim() {
        return Err(Error::DimensionMismatch {
            expected: scorer.dim(),
            got: sample.dim(),
        });
    }
    let mut matrix = CostMatrix::new(scorer.rows(), StartMode::Open, Some(1))?;
    let mut costs = vec![0.0; scorer.rows()];
    for frame in sample.frames() {
        scorer.row_costs(frame, &mut costs);
        matrix.push_column(&costs)?;
    }
    Ok(matrix.bottom())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub threshold: f64,
    /// Cost of each held-out sample against the model trained without it,
    /// in input order.
    pub held_out_costs: Vec<f64>,
    /// Ascending candidate thresholds.
    pub candidates: Vec<f64>,
    /// Held-out samples with cost strictly below each candidate.
    pub hits: Vec<usize>,
}

/// Candidate thresholds: the distinct held-out costs, the midpoints between
/// consecutive ones, and one value 5% above the largest.
pub fn candidate_grid(costs: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = costs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut grid = Vec::with_capacity(2 * sorted.len());
    for (i, &c) in sorted.iter().enumerate() {
        grid.push(c);
        if let Some(&next) = sorted.get(i + 1) {
            grid.push(0.5 * (c + next));
        }
    }
    if let Some(&max) = sorted.last() {
        grid.push((1.05 * max).max(max + 1e-9));
    }
    grid.retain(|&b| b > 0.0);
    grid
}

/// Picks the smallest candidate that maximises the number of held-out hits.
pub fn choose_threshold(held_out_costs: Vec<f64>) -> Result<CalibrationReport> {
    if held_out_costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("held-out costs must be finite"));
    }
    let candidates = candidate_grid(&held_out_costs);
    let hits: Vec<usize> = candidates
        .iter()
        .map(|&b| held_out_costs.iter().filter(|&&c| c < b).count())
        .collect();
    let best = hits
        .iter()
        .copied()
        .max()
        .ok_or(Error::Empty("no calibration candidates"))?;
    let idx = hits.iter().position(|&h| h == best).expect("max exists");
    Ok(CalibrationReport {
        threshold: candidates[idx],
        held_out_costs,
        candidates,
        hits,
    })
}

/// Leave-one-out: each sample is scored against a model trained on the others.
pub fn calibrate_threshold<S, T>(samples: &[Sequence], mut train: T) -> Result<CalibrationReport>
where
    S: FrameScorer,
    T: FnMut(&[Sequence]) -> Result<S>,
{
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-out calibration needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut costs = Vec::with_capacity(samples.len());
    for held in 0..samples.len() {
        let rest: Vec<Sequence> = samples
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != held)
            .map(|(_, s)| s.clone())
            .collect();
        let scorer = train(&rest)?;
        costs.push(terminal_cost(&scorer, &samples[held])?);
    }
    choose_threshold(costs)
}

//! Begin-end spotting of temporal patterns with Dynamic Time Warping whose
//! frame cost comes from per-frame one-class classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`seqmodel`]: sequences, labels, datasets, trained models and their files.
//! * [`dtw`]: classical DTW, the open-start streaming cost matrix and backtracking.
//! * [`align`]: warping every training sample of a class onto its median-length sample.
//! * [`gmm`] and [`ape`]: the two per-frame one-class models and their soft distances.
//! * [`spotting`]: the streaming begin-end detector and leave-one-out threshold calibration.
//! * [`features`]: behavioural features computed from masks, flow fields and head boxes.
//! * [`eval`]: overlap with Don't-Care masking, accuracy, ranks, Friedman and Nemenyi.
//! * [`synth`] and [`pipeline`]: synthetic data and the train/calibrate/spot/eval flow.
//!
//! Frame indices are 0-based and intervals are end-inclusive everywhere, except
//! inside cost matrices, where row 0 and column 0 are the boundary and cells use
//! 1-based `(row, col)` coordinates.

pub mod align;
pub mod ape;
pub mod dtw;
mod error;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod gmm;
pub mod pipeline;
pub mod seqmodel;
pub mod spotting;
pub mod synth;
mod util;

pub use error::{Error, Result};

pub use align::WarpedClassSet;
pub use ape::{ApeConfig, ApeModel, ProjectedHull};
pub use dtw::{Alignment, CostMatrix, Move, StartMode, WarpingPath};
pub use eval::{BinaryTimeline, EvalReport, RankTable};
pub use gmm::{CovarianceKind, GmmConfig, GmmModel};
pub use seqmodel::{Dataset, FrameModels, GestureModel, LabeledInterval, Sequence};
pub use spotting::{CalibrationReport, DetectionResult, FrameScorer, SpotConfig, Spotter};

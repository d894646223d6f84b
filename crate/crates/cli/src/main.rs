//! `ocdtw`: synthetic data, training, calibration, spotting, evaluation and
//! feature extraction from the command line.

mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ocdtw_core::pipeline::{Method, Variant};
use ocdtw_core::{ApeConfig, CovarianceKind, GmmConfig, SpotConfig};

/// Seed used when neither `--seed` nor a config file provides one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "ocdtw", version, about = "One-class-classifier DTW gesture spotting")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic training set and test streams.
    Synth(SynthArgs),
    /// Train one model per class (without thresholds).
    Train(TrainArgs),
    /// Leave-one-out threshold calibration of trained models.
    Calibrate(CalibrateArgs),
    /// Spot gestures in sequences with calibrated models.
    Spot(SpotArgs),
    /// Compare spotting methods on labelled test streams.
    Eval(EvalArgs),
    /// Build a feature sequence from per-frame masks, flow and head boxes.
    Features(FeaturesArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// JSON file with any `SynthConfig` fields; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub streams: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub template_length: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub warp: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub background: Option<f64>,
    #[arg(long)]
    pub glitch_rate: Option<f64>,
    #[arg(long)]
    pub glitch_scale: Option<f64>,
    #[arg(long)]
    pub gap_min: Option<usize>,
    #[arg(long)]
    pub gap_max: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GmmArgs {
    /// Mixture components per frame model.
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Diagonal instead of full covariances.
    #[arg(long)]
    pub diagonal: bool,
    /// k-means++ restarts; the best likelihood wins.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

impl GmmArgs {
    pub fn config(&self) -> GmmConfig {
        GmmConfig {
            components: self.components,
            covariance: if self.diagonal {
                CovarianceKind::Diagonal
            } else {
                CovarianceKind::Full
            },
            restarts: self.restarts,
            ..GmmConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ApeArgs {
    /// Hull expansion (> 0) or shrink (< 0).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
    /// Random projections per frame model.
    #[arg(long, default_value_t = 25)]
    pub projections: usize,
    /// Projection dimension; only 2 is supported.
    #[arg(long, default_value_t = 2)]
    pub projection_dim: usize,
}

impl ApeArgs {
    pub fn config(&self) -> ApeConfig {
        ApeConfig {
            projections: self.projections,
            projection_dim: self.projection_dim,
            phi: self.phi,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpotterArgs {
    /// Emit at the first column under the threshold, without waiting for the local minimum.
    #[arg(long)]
    pub strict_first_hit: bool,
    /// Columns of backtracking history; defaults to four model lengths.
    #[arg(long)]
    pub buffer_depth: Option<usize>,
}

impl SpotterArgs {
    pub fn config(&self) -> SpotConfig {
        SpotConfig {
            strict_first_hit: self.strict_first_hit,
            buffer_depth: self.buffer_depth,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training dataset directory.
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    #[arg(long, default_value = "gmm")]
    pub variant: Variant,
    /// Only train these classes.
    #[arg(long = "class", value_delimiter = ',')]
    pub classes: Vec<String>,
    #[command(flatten)]
    pub gmm: GmmArgs,
    #[command(flatten)]
    pub ape: ApeArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CalibrateArgs {
    /// Training dataset directory the models were trained on.
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// Model files to calibrate.
    #[arg(long = "model", required = true, num_args = 1..)]
    #[serde(skip)]
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpotArgs {
    /// Calibrated model files.
    #[arg(long = "model", required = true, num_args = 1..)]
    #[serde(skip)]
    pub models: Vec<PathBuf>,
    /// A `.seq.csv` file or a dataset directory.
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    /// Spot with this threshold instead of the calibrated ones.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub spot: SpotterArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Training dataset directory.
    #[arg(long)]
    #[serde(skip)]
    pub train: PathBuf,
    /// Labelled test streams.
    #[arg(long)]
    #[serde(skip)]
    pub test: PathBuf,
    /// Methods to compare.
    #[arg(long, value_delimiter = ',', default_value = "dtw-random,dtw-mean,dtw-gmm,dtw-ape")]
    pub methods: Vec<Method>,
    /// Don't-Care widths, in frames.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub dont_care: Vec<usize>,
    #[command(flatten)]
    pub gmm: GmmArgs,
    #[command(flatten)]
    pub ape: ApeArgs,
    #[command(flatten)]
    pub spot: SpotterArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    /// Directory of `<stem>.mask.pgm`, `<stem>.flow.csv`, `<stem>.head.csv` files.
    #[arg(long)]
    #[serde(skip)]
    pub frames: PathBuf,
    /// Features in output order: fhead, ftorso, finv, fmov.
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<ocdtw_core::features::FeatureKind>,
    /// Mask label of the subject.
    #[arg(long)]
    pub subject: u32,
    /// Mask labels that count as neighbours for finv.
    #[arg(long, value_delimiter = ',')]
    pub neighbours: Vec<u32>,
    /// Head grid as ROWSxCOLS.
    #[arg(long, default_value = "4x4")]
    pub grid: String,
    /// One-hot head cells instead of normalized labels.
    #[arg(long)]
    pub one_hot: bool,
    /// Id of the written sequence.
    #[arg(long, default_value = "features")]
    pub id: String,
    #[arg(long)]
    pub frame_rate: Option<f64>,
}

/// 2 when the failure is an I/O problem, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ocdtw_core::Error>() {
            return if e.is_io() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

/// The error chain joined with ": ", skipping causes a parent already printed.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

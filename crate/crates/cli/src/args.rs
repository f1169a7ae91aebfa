use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "keydetect", version, about = "Keystroke-dynamics detectors, classifiers and verification service")]
pub struct Cli {
    /// Master seed; every random component derives its own stream from it.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Parse a benchmark CSV, optionally drop outliers, write a normalized dataset.
    Ingest(IngestArgs),
    /// Run the anomaly-detector benchmark and write EER/ZFR tables and ROC curves.
    EvalAnomaly(EvalAnomalyArgs),
    /// Train a classifier, print its test metrics and save it.
    Train(TrainArgs),
    /// Run the HTTP enrollment and verification service.
    Serve(ServeArgs),
    /// Write per-feature summary and histogram data for plotting.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutlierArgs {
    /// Drop samples whose per-subject z-score exceeds this in any feature (off by default).
    #[arg(long)]
    pub outlier_z: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IngestArgs {
    /// Benchmark CSV (or an already normalized file).
    pub input: PathBuf,
    /// Where to write the normalized dataset.
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub outliers: OutlierArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalAnomalyArgs {
    /// Benchmark CSV or normalized dataset.
    pub data: PathBuf,
    /// Comma-separated detector tags, `all` for the six distance detectors,
    /// `ocsvm` for the one-class SVM.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    pub detectors: Vec<String>,
    /// Output directory for tables, per-cell results and ROC curves.
    #[arg(short, long, default_value = "anomaly-results")]
    pub out: PathBuf,
    /// Leading samples per subject used for training.
    #[arg(long, default_value_t = 200)]
    pub train_reps: usize,
    /// Leading samples taken from every other subject as impostors.
    #[arg(long, default_value_t = 5)]
    pub impostor_reps: usize,
    /// z cut for the outlier-count detector.
    #[arg(long, default_value_t = keydetect_core::detectors::DEFAULT_Z_THRESHOLD)]
    pub z_threshold: f64,
    /// Fix ν for the one-class SVM instead of tuning it per subject.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Evaluate only these subjects (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub subjects: Option<Vec<String>>,
    /// Skip writing one ROC file per (detector, subject).
    #[arg(long)]
    pub no_roc: bool,
    #[command(flatten)]
    pub outliers: OutlierArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Benchmark CSV or normalized dataset.
    pub data: PathBuf,
    #[arg(long, value_parser = ["fc", "cnn1d", "cnn1d-neg", "rf", "svm"])]
    pub model: String,
    /// Model file to write.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Write the test confusion matrix here.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    /// Maximum training epochs for the neural networks.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Trees in the random forest.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Subjects kept as known classes by `cnn1d-neg`.
    #[arg(long, default_value_t = keydetect_core::classifiers::negative::DEFAULT_KNOWN_SUBJECTS)]
    pub known_subjects: usize,
    /// Samples drawn from each unknown subject for the negative class.
    #[arg(long, default_value_t = keydetect_core::classifiers::negative::NEGATIVE_PER_SUBJECT)]
    pub negative_per_subject: usize,
    #[command(flatten)]
    pub outliers: OutlierArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value_t = keydetect_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory holding the per-user logs.
    #[arg(long, default_value = "keydetect-store")]
    pub store: PathBuf,
    /// Detector used when a train request names none.
    #[arg(long, default_value = "scaled_manhattan")]
    pub detector: String,
    #[arg(long, default_value_t = keydetect_service::DEFAULT_MIN_ENROLL)]
    pub min_enroll: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Benchmark CSV or normalized dataset.
    pub data: PathBuf,
    #[arg(short, long, default_value = "report")]
    pub out: PathBuf,
    /// Histogram bins per feature.
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    #[command(flatten)]
    pub outliers: OutlierArgs,
}

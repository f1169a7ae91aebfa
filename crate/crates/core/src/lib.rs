//! Keystroke-dynamics authentication toolkit.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the crate root
//! re-exports `f64` aliases of the common types.

pub mod classifiers;
pub mod dataset;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod model_io;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TimingVector = features::TimingVector<f64>;
pub type KeystrokeSample = dataset::KeystrokeSample<f64>;
pub type Dataset = dataset::Dataset<f64>;
pub type AnomalySplit = dataset::AnomalySplit<f64>;
pub type ClassSplit = dataset::ClassSplit<f64>;
pub type ColumnStats = stats::ColumnStats<f64>;
pub type Matrix = linalg::SquareMatrix<f64>;
pub type ScoredTestSet = eval::ScoredTestSet<f64>;
pub type StatDetectorModel = detectors::StatDetectorModel<f64>;
pub type OcSvmModel = detectors::ocsvm::OcSvmModel<f64>;
pub type Network = nn::Network<f64>;
pub type NnClassifier = classifiers::neural::NnClassifier<f64>;
pub type ForestModel = classifiers::forest::ForestModel<f64>;
pub type LinearSvmModel = classifiers::svm::LinearSvmModel<f64>;
pub type TrainedModel = classifiers::TrainedModel<f64>;

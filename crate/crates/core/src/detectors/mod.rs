//! Per-subject one-class anomaly scorers.
//!
//! Every scorer follows the same orientation: higher scores are more
//! anomalous. The six statistical detectors are fitted from column statistics
//! of the subject's training vectors; the one-class SVM lives in [`ocsvm`].

pub mod ocsvm;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;
use crate::stats::{column_stats, covariance_matrix, ColumnStats, COVARIANCE_EPSILON};

pub use ocsvm::{fit_ocsvm, OcSvmModel, OcSvmParams};

/// Floor for the MAD and standard deviation divisors, in seconds.
pub const SCALE_FLOOR: f64 = 1e-6;

/// Default z-score cut for the outlier-count detector.
pub const DEFAULT_Z_THRESHOLD: f64 = 1.96;

/// Anything that maps a feature vector to an anomaly score (higher = more anomalous).
pub trait AnomalyScorer<T> {
    fn score(&self, x: &[T]) -> Result<T>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    Euclidean,
    Manhattan,
    ScaledManhattan,
    Mahalanobis,
    MahalanobisNormed,
    ZScore,
}

impl DetectorKind {
    /// The six distance detectors.
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::Euclidean,
        DetectorKind::Manhattan,
        DetectorKind::Mahalanobis,
        DetectorKind::MahalanobisNormed,
        DetectorKind::ScaledManhattan,
        DetectorKind::ZScore,
    ];

    /// Machine-readable tag, used in files, flags and the HTTP API.
    pub fn tag(self) -> &'static str {
        match self {
            DetectorKind::Euclidean => "euclidean",
            DetectorKind::Manhattan => "manhattan",
            DetectorKind::ScaledManhattan => "scaled_manhattan",
            DetectorKind::Mahalanobis => "mahalanobis",
            DetectorKind::MahalanobisNormed => "mahalanobis_normed",
            DetectorKind::ZScore => "zscore",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DetectorKind::Euclidean => "Euclidean",
            DetectorKind::Manhattan => "Manhattan",
            DetectorKind::ScaledManhattan => "Manhattan (Scaled)",
            DetectorKind::Mahalanobis => "Mahalanobis",
            DetectorKind::MahalanobisNormed => "Mahalanobis (Normed)",
            DetectorKind::ZScore => "Z-Score",
        }
    }

    pub fn needs_covariance(self) -> bool {
        matches!(self, DetectorKind::Mahalanobis | DetectorKind::MahalanobisNormed)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == norm)
            .or(match norm.as_str() {
                "z_score" => Some(DetectorKind::ZScore),
                "manhattan_scaled" => Some(DetectorKind::ScaledManhattan),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidParameter(format!("unknown detector {s:?}")))
    }
}

/// A fitted statistical detector.
#[derive(Debug, Clone, PartialEq)]
pub struct StatDetectorModel<T> {
    pub kind: DetectorKind,
    pub stats: ColumnStats<T>,
    /// `(S + εI)⁻¹`; present iff `kind` is a Mahalanobis variant.
    pub cov_inverse: Option<SquareMatrix<T>>,
    pub z_threshold: T,
}

pub fn fit_stat_detector<T: Scalar, R: AsRef<[T]>>(kind: DetectorKind, train: &[R]) -> Result<StatDetectorModel<T>> {
    fit_stat_detector_with(kind, train, T::lit(DEFAULT_Z_THRESHOLD))
}

pub fn fit_stat_detector_with<T: Scalar, R: AsRef<[T]>>(
    kind: DetectorKind,
    train: &[R],
    z_threshold: T,
) -> Result<StatDetectorModel<T>> {
    if !(z_threshold > T::zero()) {
        return Err(Error::InvalidParameter("z threshold must be positive".into()));
    }
    let stats = column_stats(train)?;
    let cov_inverse = if kind.needs_covariance() {
        Some(
            covariance_matrix(train)?
                .with_added_diagonal(T::lit(COVARIANCE_EPSILON))
                .inverse()?,
        )
    } else {
        None
    };
    Ok(StatDetectorModel {
        kind,
        stats,
        cov_inverse,
        z_threshold,
    })
}

impl<T: Scalar> StatDetectorModel<T> {
    pub fn dim(&self) -> usize {
        self.stats.dim()
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn diffs<'a>(&'a self, x: &'a [T]) -> impl Iterator<Item = T> + 'a {
        x.iter().zip(&self.stats.mean).map(|(&xi, &yi)| xi - yi)
    }

    fn inverse(&self) -> Result<&SquareMatrix<T>> {
        self.cov_inverse
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter(format!("{} model has no inverse covariance", self.kind)))
    }
}

impl<T: Scalar> AnomalyScorer<T> for StatDetectorModel<T> {
    fn score(&self, x: &[T]) -> Result<T> {
        match self.kind {
            DetectorKind::Euclidean => score_euclidean(self, x),
            DetectorKind::Manhattan => score_manhattan(self, x),
            DetectorKind::ScaledManhattan => score_scaled_manhattan(self, x),
            DetectorKind::Mahalanobis => score_mahalanobis(self, x),
            DetectorKind::MahalanobisNormed => score_mahalanobis_normed(self, x),
            DetectorKind::ZScore => score_zscore_count(self, x),
        }
    }
}

/// Squared Euclidean distance to the mean vector.
pub fn score_euclidean<T: Scalar>(m: &StatDetectorModel<T>, x: &[T]) -> Result<T> {
    m.check_dim(x)?;
    Ok(m.diffs(x).map(|d| d * d).sum())
}

pub fn score_manhattan<T: Scalar>(m: &StatDetectorModel<T>, x: &[T]) -> Result<T> {
    m.check_dim(x)?;
    Ok(m.diffs(x).map(|d| d.abs()).sum())
}

/// Manhattan distance with each dimension divided by its mean absolute deviation.
pub fn score_scaled_manhattan<T: Scalar>(m: &StatDetectorModel<T>, x: &[T]) -> Result<T> {
    m.check_dim(x)?;
    let floor = T::lit(SCALE_FLOOR);
    Ok(m.diffs(x).zip(&m.stats.mad).map(|(d, &a)| d.abs() / a.max(floor)).sum())
}

/// `(x - y)ᵀ S⁻¹ (x - y)`.
pub fn score_mahalanobis<T: Scalar>(m: &StatDetectorModel<T>, x: &[T]) -> Result<T> {
    m.check_dim(x)?;
    let d: Vec<T> = m.diffs(x).collect();
    Ok(m.inverse()?.quadratic_form(&d))
}

/// Mahalanobis distance divided by `‖x‖·‖y‖`.
pub fn score_mahalanobis_normed<T: Scalar>(m: &StatDetectorModel<T>, x: &[T]) -> Result<T> {
    let dist = score_mahalanobis(m, x)?;
    let norm = |v: &[T]| v.iter().map(|&a| a * a).sum::<T>().sqrt();
    let denom = norm(x) * norm(&m.stats.mean);
    if !(denom > T::zero()) {
        return Err(Error::DegenerateNorm);
    }
    Ok(dist / denom)
}

/// Number of features whose absolute z-score exceeds the model's threshold.
pub fn score_zscore_count<T: Scalar>(m: &StatDetectorModel<T>, x: &[T]) -> Result<T> {
    m.check_dim(x)?;
    let floor = T::lit(SCALE_FLOOR);
    let count = m
        .diffs(x)
        .zip(&m.stats.std)
        .filter(|(d, &s)| d.abs() / s.max(floor) > m.z_threshold)
        .count();
    Ok(T::from_usize_lossy(count))
}

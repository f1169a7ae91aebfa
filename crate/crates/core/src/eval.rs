//! ROC construction, equal-error rate, zero-miss false-alarm rate, the
//! per-subject anomaly benchmark, and classifier metrics.
//!
//! Scores are oriented so that higher means more anomalous. A sample is
//! flagged at threshold `t` when its score is `>= t`: a flagged genuine
//! attempt is a false alarm, an unflagged impostor attempt is a miss.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::dataset::{make_anomaly_splits, tuning_impostors, AnomalyProtocol, Dataset};
use crate::detectors::ocsvm::{OcSvmDetector, OcSvmParams, NU_GRID};
use crate::detectors::{fit_stat_detector_with, AnomalyScorer, DetectorKind, DEFAULT_Z_THRESHOLD};
use crate::error::{Error, Result};
use crate::features::{FEATURE_LABELS, N_FEATURES};
use crate::scalar::Scalar;
use crate::stats::{column_stats, mean_and_sd};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTestSet<T> {
    pub genuine: Vec<T>,
    pub impostor: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// `+inf` for the point where nothing is flagged.
    pub threshold: f64,
    pub false_alarm: f64,
    pub hit: f64,
}

/// ROC points ordered by increasing false-alarm rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

// Scores sorted ascending, as f64, with NaN rejected.
struct Sorted {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl Sorted {
    fn new<T: Scalar>(s: &ScoredTestSet<T>) -> Result<Self> {
        if s.genuine.is_empty() || s.impostor.is_empty() {
            return Err(Error::EmptySet);
        }
        let conv = |v: &[T]| -> Result<Vec<f64>> {
            let mut out: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
            if out.iter().any(|x| x.is_nan()) {
                return Err(Error::InvalidParameter("NaN score".into()));
            }
            out.sort_by(f64::total_cmp);
            Ok(out)
        };
        Ok(Self {
            genuine: conv(&s.genuine)?,
            impostor: conv(&s.impostor)?,
        })
    }

    /// Distinct observed scores, ascending.
    fn thresholds(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.genuine.iter().chain(&self.impostor).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }

    /// Counts `(genuine >= t, impostor < t)`.
    fn counts(&self, t: f64) -> (usize, usize) {
        let g_below = self.genuine.partition_point(|&x| x < t);
        let i_below = self.impostor.partition_point(|&x| x < t);
        (self.genuine.len() - g_below, i_below)
    }
}

pub fn build_roc<T: Scalar>(s: &ScoredTestSet<T>) -> Result<RocCurve> {
    let sorted = Sorted::new(s)?;
    let ng = sorted.genuine.len() as f64;
    let ni = sorted.impostor.len() as f64;
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        false_alarm: 0.0,
        hit: 0.0,
    }];
    for &t in sorted.thresholds().iter().rev() {
        let (fa, miss) = sorted.counts(t);
        points.push(RocPoint {
            threshold: t,
            false_alarm: fa as f64 / ng,
            hit: 1.0 - miss as f64 / ni,
        });
    }
    Ok(RocCurve { points })
}

/// Rate at which the miss and false-alarm curves cross.
///
/// Between consecutive thresholds the crossing is located by linear
/// interpolation; when the curves coincide over a run of thresholds the
/// midpoint of that run's rates is returned.
pub fn equal_error_rate<T: Scalar>(s: &ScoredTestSet<T>) -> Result<f64> {
    let sorted = Sorted::new(s)?;
    let ng = sorted.genuine.len() as i128;
    let ni = sorted.impostor.len() as i128;
    // Work in integer numerators over ng*ni so equality is exact.
    let mut seq: Vec<(i128, i128)> = sorted
        .thresholds()
        .into_iter()
        .map(|t| {
            let (fa, miss) = sorted.counts(t);
            (fa as i128 * ni, miss as i128 * ng)
        })
        .collect();
    seq.push((0, ni * ng));
    let denom = (ng * ni) as f64;

    let k = seq
        .iter()
        .position(|&(fa, miss)| fa <= miss)
        .expect("the final point always has fa <= miss");
    let (fa_k, miss_k) = seq[k];
    if fa_k == miss_k {
        let last = k + seq[k..].iter().take_while(|&&(fa, miss)| fa == miss).count() - 1;
        return Ok((fa_k + seq[last].0) as f64 / 2.0 / denom);
    }
    if k == 0 {
        return Ok(fa_k as f64 / denom);
    }
    let (fa_p, miss_p) = seq[k - 1];
    let d_prev = (fa_p - miss_p) as f64;
    let d_next = (fa_k - miss_k) as f64;
    let frac = d_prev / (d_prev - d_next);
    Ok((fa_p as f64 + frac * (fa_k - fa_p) as f64) / denom)
}

/// Smallest false-alarm rate achievable with no missed impostors: the
/// fraction of genuine scores at or above the lowest impostor score.
pub fn zero_miss_false_alarm<T: Scalar>(s: &ScoredTestSet<T>) -> Result<f64> {
    let sorted = Sorted::new(s)?;
    let (fa, _) = sorted.counts(sorted.impostor[0]);
    Ok(fa as f64 / sorted.genuine.len() as f64)
}

/// The detectors the benchmark knows how to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchDetector {
    Stat(DetectorKind),
    /// One-class SVM with ν tuned per subject.
    OcSvm,
}

impl BenchDetector {
    pub fn name(&self) -> &'static str {
        match self {
            BenchDetector::Stat(k) => k.display_name(),
            BenchDetector::OcSvm => "SVM (one-class)",
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            BenchDetector::Stat(k) => k.tag(),
            BenchDetector::OcSvm => "ocsvm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ocsvm" | "svm" | "one_class_svm" | "one-class-svm" => Ok(BenchDetector::OcSvm),
            other => other.parse().map(BenchDetector::Stat),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub protocol: AnomalyProtocol,
    pub z_threshold: f64,
    pub ocsvm: OcSvmParams,
    pub nu_grid: Vec<f64>,
    /// Impostor samples per other subject used for ν tuning.
    pub tuning_impostors_per_subject: usize,
    /// Evaluate only these subjects (impostors still come from everyone).
    pub subjects: Option<Vec<String>>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            protocol: AnomalyProtocol::default(),
            z_threshold: DEFAULT_Z_THRESHOLD,
            ocsvm: OcSvmParams::default(),
            nu_grid: NU_GRID.to_vec(),
            tuning_impostors_per_subject: 1,
            subjects: None,
        }
    }
}

/// Result of one (subject, detector) cell.
#[derive(Debug, Clone)]
pub struct SubjectResult {
    pub subject: String,
    pub detector: BenchDetector,
    pub outcome: std::result::Result<CellMetrics, String>,
}

#[derive(Debug, Clone)]
pub struct CellMetrics {
    pub eer: f64,
    pub zfr: f64,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTableRow {
    pub detector: String,
    pub mean_eer: f64,
    pub sd_eer: f64,
    pub mean_zfr: f64,
    pub sd_zfr: f64,
    /// Subjects that contributed.
    pub subjects: usize,
    /// Cells that failed to fit or score.
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub rows: Vec<DetectorTableRow>,
    pub cells: Vec<SubjectResult>,
}

fn score_all<T: Scalar, S: AnomalyScorer<T>>(m: &S, xs: &[crate::features::TimingVector<T>]) -> Result<Vec<T>> {
    xs.iter()
        .map(|x| {
            let s = m.score(x)?;
            if !s.is_finite() {
                return Err(Error::InvalidParameter("non-finite anomaly score".into()));
            }
            Ok(s)
        })
        .collect()
}

/// Fits every detector on every subject's training split, scores both test
/// sets, and aggregates EER and ZFR (mean and population SD across subjects).
pub fn run_anomaly_benchmark<T: Scalar>(
    ds: &Dataset<T>,
    detectors: &[BenchDetector],
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    let splits = make_anomaly_splits(ds, config.protocol)?;
    let splits: Vec<_> = match &config.subjects {
        Some(wanted) => splits.into_iter().filter(|s| wanted.contains(&s.subject)).collect(),
        None => splits,
    };
    let z = T::lit(config.z_threshold);

    let cells: Vec<SubjectResult> = splits
        .par_iter()
        .flat_map_iter(|split| {
            detectors.iter().map(move |&det| {
                let run = || -> Result<CellMetrics> {
                    let scores = match det {
                        BenchDetector::Stat(kind) => {
                            let m = fit_stat_detector_with(kind, &split.train, z)?;
                            ScoredTestSet {
                                genuine: score_all(&m, &split.genuine_test)?,
                                impostor: score_all(&m, &split.impostor_test)?,
                            }
                        }
                        BenchDetector::OcSvm => {
                            let tune = tuning_impostors(ds, &split.subject, config.protocol, config.tuning_impostors_per_subject);
                            let m = OcSvmDetector::fit_tuned(&split.train, &tune, &config.nu_grid, config.ocsvm)?;
                            ScoredTestSet {
                                genuine: score_all(&m, &split.genuine_test)?,
                                impostor: score_all(&m, &split.impostor_test)?,
                            }
                        }
                    };
                    Ok(CellMetrics {
                        eer: equal_error_rate(&scores)?,
                        zfr: zero_miss_false_alarm(&scores)?,
                        roc: build_roc(&scores)?,
                    })
                };
                SubjectResult {
                    subject: split.subject.clone(),
                    detector: det,
                    outcome: run().map_err(|e| e.to_string()),
                }
            })
        })
        .collect();

    let rows = detectors
        .iter()
        .map(|&det| {
            let ok: Vec<&CellMetrics> = cells
                .iter()
                .filter(|c| c.detector == det)
                .filter_map(|c| c.outcome.as_ref().ok())
                .collect();
            let failures = cells.iter().filter(|c| c.detector == det && c.outcome.is_err()).count();
            let eers: Vec<f64> = ok.iter().map(|c| c.eer).collect();
            let zfrs: Vec<f64> = ok.iter().map(|c| c.zfr).collect();
            let (mean_eer, sd_eer) = mean_and_sd(&eers);
            let (mean_zfr, sd_zfr) = mean_and_sd(&zfrs);
            DetectorTableRow {
                detector: det.name().to_string(),
                mean_eer,
                sd_eer,
                mean_zfr,
                sd_zfr,
                subjects: ok.len(),
                failures,
            }
        })
        .collect();
    Ok(BenchmarkReport { rows, cells })
}

pub fn sort_by_mean_eer_desc(rows: &mut [DetectorTableRow]) {
    rows.sort_by(|a, b| b.mean_eer.total_cmp(&a.mean_eer));
}

pub fn sort_by_mean_zfr_asc(rows: &mut [DetectorTableRow]) {
    rows.sort_by(|a, b| a.mean_zfr.total_cmp(&b.mean_zfr));
}

pub const TABLE_HEADER: [&str; 7] = ["detector", "mean_eer", "sd_eer", "mean_zfr", "sd_zfr", "subjects", "failures"];

/// Writes detector rows as CSV with [`TABLE_HEADER`]; rates have six decimals.
pub fn write_table_csv<W: Write>(rows: &[DetectorTableRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.detector.clone(),
            format!("{:.6}", r.mean_eer),
            format!("{:.6}", r.sd_eer),
            format!("{:.6}", r.mean_zfr),
            format!("{:.6}", r.sd_zfr),
            r.subjects.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table_csv<R: Read>(reader: R) -> Result<Vec<DetectorTableRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    if rdr.headers()?.iter().ne(TABLE_HEADER) {
        return Err(Error::Schema("unexpected detector table header".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c].parse().map_err(|_| Error::Value {
                row: i + 1,
                message: format!("bad number {:?}", &rec[c]),
            })
        };
        rows.push(DetectorTableRow {
            detector: rec[0].to_string(),
            mean_eer: num(1)?,
            sd_eer: num(2)?,
            mean_zfr: num(3)?,
            sd_zfr: num(4)?,
            subjects: num(5)? as usize,
            failures: num(6)? as usize,
        });
    }
    Ok(rows)
}

/// ROC points as CSV: `threshold,false_alarm_rate,hit_rate`.
pub fn write_roc_csv<W: Write>(roc: &RocCurve, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "false_alarm_rate", "hit_rate"])?;
    for p in &roc.points {
        w.write_record([p.threshold.to_string(), p.false_alarm.to_string(), p.hit.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-subject EER/ZFR for every cell: `subject,detector,eer,zfr,error`.
pub fn write_cells_csv<W: Write>(cells: &[SubjectResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject", "detector", "eer", "zfr", "error"])?;
    for c in cells {
        let (eer, zfr, err) = match &c.outcome {
            Ok(m) => (format!("{:.6}", m.eer), format!("{:.6}", m.zfr), String::new()),
            Err(e) => (String::new(), String::new(), e.clone()),
        };
        w.write_record([c.subject.as_str(), c.detector.tag(), &eer, &zfr, &err])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-class precision, recall and F-score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
}

pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Precision and recall are 0 when their denominator is empty.
pub fn classifier_metrics(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<ClassifierMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= n_classes || y >= n_classes {
            return Err(Error::InvalidParameter(format!("class index out of range 0..{n_classes}")));
        }
        confusion[y][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let per_class = (0..n_classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
            let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let recall = if support > 0 { tp / support as f64 } else { 0.0 };
            ClassMetrics {
                precision,
                recall,
                f_score: f_score(precision, recall),
                support,
            }
        })
        .collect();
    Ok(ClassifierMetrics {
        accuracy: correct as f64 / labels.len() as f64,
        confusion,
        per_class,
    })
}

pub fn write_confusion_csv<W: Write>(m: &ClassifierMetrics, label_map: &[String], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(label_map.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in m.confusion.iter().enumerate() {
        let mut rec = vec![label_map.get(i).cloned().unwrap_or_else(|| i.to_string())];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Plot data for per-feature distributions: one row per (subject, feature)
/// with `mean,std,mad,min,max`.
pub fn write_feature_summary_csv<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject", "feature", "mean", "std", "mad", "min", "max"])?;
    for (i, subject) in ds.subjects().iter().enumerate() {
        let rows: Vec<&[T]> = ds.samples_at(i).iter().map(|s| s.vector.as_slice()).collect();
        if rows.len() < 2 {
            continue;
        }
        let st = column_stats(&rows)?;
        for f in 0..N_FEATURES {
            let (lo, hi) = rows
                .iter()
                .map(|r| r[f].as_f64())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            w.write_record([
                subject.clone(),
                FEATURE_LABELS[f].to_string(),
                st.mean[f].as_f64().to_string(),
                st.std[f].as_f64().to_string(),
                st.mad[f].as_f64().to_string(),
                lo.to_string(),
                hi.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Plot data for pooled per-feature histograms: `feature,bin_low,bin_high,count`.
pub fn write_feature_histograms_csv<T: Scalar, W: Write>(ds: &Dataset<T>, bins: usize, writer: W) -> Result<()> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "bin_low", "bin_high", "count"])?;
    for f in 0..N_FEATURES {
        let vals: Vec<f64> = ds.samples().iter().map(|s| s.vector[f].as_f64()).collect();
        if vals.is_empty() {
            continue;
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in vals {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        for (b, c) in counts.into_iter().enumerate() {
            w.write_record([
                FEATURE_LABELS[f].to_string(),
                (lo + b as f64 * width).to_string(),
                (lo + (b + 1) as f64 * width).to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(g: &[f64], i: &[f64]) -> ScoredTestSet<f64> {
        ScoredTestSet {
            genuine: g.to_vec(),
            impostor: i.to_vec(),
        }
    }

    #[test]
    fn hand_swept_fixture() {
        let s = set(&[0.1, 0.2, 0.3, 0.4], &[0.35, 0.5, 0.6, 0.7]);
        assert_eq!(equal_error_rate(&s).unwrap(), 0.25);
        assert_eq!(zero_miss_false_alarm(&s).unwrap(), 0.25);
    }

    #[test]
    fn perfectly_separated() {
        let s = set(&[0.1, 0.2], &[0.5, 0.6, 0.9]);
        assert_eq!(equal_error_rate(&s).unwrap(), 0.0);
        assert_eq!(zero_miss_false_alarm(&s).unwrap(), 0.0);
        let roc = build_roc(&s).unwrap();
        assert!(roc.points.iter().any(|p| p.false_alarm == 0.0 && p.hit == 1.0));
    }

    #[test]
    fn chance_detector() {
        let v = [0.1, 0.2, 0.3, 0.4, 0.5];
        let s = set(&v, &v);
        assert!((equal_error_rate(&s).unwrap() - 0.5).abs() < 1e-12);
        let v = [0.1, 0.2, 0.3, 0.4];
        assert!((equal_error_rate(&set(&v, &v)).unwrap() - 0.5).abs() < 1e-12);
        let roc = build_roc(&set(&v, &v)).unwrap();
        assert!(roc.points.iter().all(|p| (p.hit - p.false_alarm).abs() < 1e-12));
    }

    #[test]
    fn worst_case_zfr() {
        assert_eq!(zero_miss_false_alarm(&set(&[0.5, 0.6], &[0.1, 0.9])).unwrap(), 1.0);
    }

    #[test]
    fn empty_sets_error() {
        assert!(matches!(equal_error_rate(&set(&[], &[1.0])), Err(Error::EmptySet)));
        assert!(matches!(build_roc(&set(&[1.0], &[])), Err(Error::EmptySet)));
        assert!(matches!(zero_miss_false_alarm(&set(&[], &[])), Err(Error::EmptySet)));
    }

    #[test]
    fn classifier_metrics_hand_computed() {
        let m = classifier_metrics(&[0, 1, 0], &[0, 1, 1], 2).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.per_class[1].recall, 0.5);
        assert_eq!(m.per_class[1].precision, 1.0);
        assert_eq!(m.confusion, vec![vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn all_correct_is_diagonal() {
        let y = [0, 1, 2, 2, 1];
        let m = classifier_metrics(&y, &y, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.confusion[i][j] > 0, i == j && y.contains(&i));
            }
            assert_eq!(m.per_class[i].f_score, 1.0);
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        write_table_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", TABLE_HEADER.join(",")));
    }

    #[test]
    fn table_round_trip_to_printed_precision() {
        let rows = vec![DetectorTableRow {
            detector: "Manhattan (Scaled)".into(),
            mean_eer: 0.141_234_567,
            sd_eer: 0.068,
            mean_zfr: 0.54,
            sd_zfr: 0.271,
            subjects: 51,
            failures: 0,
        }];
        let mut buf = Vec::new();
        write_table_csv(&rows, &mut buf).unwrap();
        let back = read_table_csv(&buf[..]).unwrap();
        assert_eq!(back[0].detector, rows[0].detector);
        assert!((back[0].mean_eer - rows[0].mean_eer).abs() <= 5e-7);
        assert_eq!(back[0].subjects, 51);
    }
}

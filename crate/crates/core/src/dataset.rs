//! Benchmark ingestion: CSV parsing, outlier filtering, and the anomaly and
//! classification splits.
//!
//! # Normalized dataset file
//!
//! Besides the benchmark CSV, datasets can be stored in a plain-text
//! normalized layout that reloads without header validation surprises:
//!
//! ```text
//! keydetect-dataset 1
//! features H.period DD.period.t ... H.Return
//! samples <N>
//! <subject> <session> <rep> <31 values>
//! ...
//! ```
//!
//! Fields are separated by single spaces; values are written with the
//! shortest representation that round-trips exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::features::{TimingVector, FEATURE_LABELS, N_FEATURES};
use crate::scalar::Scalar;
use crate::seed;

pub const SESSIONS: u32 = 8;
pub const REPS_PER_SESSION: u32 = 50;

/// Default per-subject z-score cut for outlier removal.
pub const DEFAULT_OUTLIER_Z: f64 = 4.0;

const NORMALIZED_MAGIC: &str = "keydetect-dataset 1";

#[derive(Debug, Clone, PartialEq)]
pub struct KeystrokeSample<T> {
    pub subject: String,
    pub session: u32,
    pub repetition: u32,
    pub vector: TimingVector<T>,
}

impl<T: Scalar> KeystrokeSample<T> {
    pub fn new(subject: impl Into<String>, session: u32, repetition: u32, vector: TimingVector<T>) -> Result<Self> {
        if !(1..=SESSIONS).contains(&session) {
            return Err(Error::InvalidParameter(format!("session {session} outside 1..={SESSIONS}")));
        }
        if !(1..=REPS_PER_SESSION).contains(&repetition) {
            return Err(Error::InvalidParameter(format!(
                "repetition {repetition} outside 1..={REPS_PER_SESSION}"
            )));
        }
        Ok(Self {
            subject: subject.into(),
            session,
            repetition,
            vector,
        })
    }
}

/// All samples, sorted by subject (lexicographic) then `(session, repetition)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    samples: Vec<KeystrokeSample<T>>,
    subjects: Vec<String>,
    ranges: Vec<(usize, usize)>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(mut samples: Vec<KeystrokeSample<T>>) -> Self {
        samples.sort_by(|a, b| {
            (a.subject.as_str(), a.session, a.repetition).cmp(&(b.subject.as_str(), b.session, b.repetition))
        });
        let mut subjects: Vec<String> = Vec::new();
        let mut ranges = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            if subjects.last() != Some(&s.subject) {
                if let Some(last) = ranges.last_mut() {
                    let (start, _) = *last;
                    *last = (start, i);
                }
                subjects.push(s.subject.clone());
                ranges.push((i, i));
            }
        }
        if let Some(last) = ranges.last_mut() {
            last.1 = samples.len();
        }
        Self {
            samples,
            subjects,
            ranges,
        }
    }

    pub fn samples(&self) -> &[KeystrokeSample<T>] {
        &self.samples
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subject_index(&self, subject: &str) -> Option<usize> {
        self.subjects.binary_search_by(|s| s.as_str().cmp(subject)).ok()
    }

    /// Samples of the `i`-th subject, in `(session, repetition)` order.
    pub fn samples_at(&self, i: usize) -> &[KeystrokeSample<T>] {
        let (a, b) = self.ranges[i];
        &self.samples[a..b]
    }

    pub fn samples_of(&self, subject: &str) -> &[KeystrokeSample<T>] {
        self.subject_index(subject).map_or(&[], |i| self.samples_at(i))
    }

    /// Keeps only the listed subjects (unknown ids are ignored).
    pub fn restrict_to(&self, subjects: &[String]) -> Self {
        Self::new(
            self.samples
                .iter()
                .filter(|s| subjects.contains(&s.subject))
                .cloned()
                .collect(),
        )
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset::new(
            self.samples
                .iter()
                .map(|s| KeystrokeSample {
                    subject: s.subject.clone(),
                    session: s.session,
                    repetition: s.repetition,
                    vector: s.vector.cast(),
                })
                .collect(),
        )
    }
}

/// Parses the benchmark CSV.
pub fn parse_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    parse_csv_reader(File::open(path)?)
}

pub fn parse_csv_reader<T: Scalar, R: Read>(reader: R) -> Result<Dataset<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::Schema("empty file".into())),
        Some(h) => h?,
    };
    let column_of = header_columns(&header)?;

    let mut samples = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != 3 + N_FEATURES {
            return Err(Error::Schema(format!(
                "data row {row} has {} columns, expected {}",
                rec.len(),
                3 + N_FEATURES
            )));
        }
        let int = |c: usize, name: &str| -> Result<u32> {
            rec[c].parse().map_err(|_| Error::Value {
                row,
                message: format!("{name} {:?} is not an integer", &rec[c]),
            })
        };
        let session = int(1, "sessionIndex")?;
        let rep = int(2, "rep")?;
        let mut values = [T::zero(); N_FEATURES];
        for (f, &c) in column_of.iter().enumerate() {
            let v: f64 = rec[c].parse().map_err(|_| Error::Value {
                row,
                message: format!("{} value {:?} is not numeric", FEATURE_LABELS[f], &rec[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Value {
                    row,
                    message: format!("{} value is not finite", FEATURE_LABELS[f]),
                });
            }
            values[f] = T::lit(v);
        }
        let vector = TimingVector::new(values).map_err(|e| Error::Value {
            row,
            message: e.to_string(),
        })?;
        let sample = KeystrokeSample::new(&rec[0], session, rep, vector).map_err(|e| Error::Value {
            row,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(Dataset::new(samples))
}

// Maps each canonical feature to its column in the file.
fn header_columns(header: &csv::StringRecord) -> Result<[usize; N_FEATURES]> {
    if header.len() != 3 + N_FEATURES {
        return Err(Error::Schema(format!(
            "header has {} columns, expected {}",
            header.len(),
            3 + N_FEATURES
        )));
    }
    for (c, want) in ["subject", "sessionIndex", "rep"].iter().enumerate() {
        if &header[c] != *want {
            return Err(Error::Schema(format!("header column {c} is {:?}, expected {want:?}", &header[c])));
        }
    }
    let mut column_of = [0; N_FEATURES];
    for (f, label) in FEATURE_LABELS.iter().enumerate() {
        let matches: Vec<usize> = (3..header.len()).filter(|&c| &header[c] == *label).collect();
        match matches.as_slice() {
            [c] => column_of[f] = *c,
            [] => return Err(Error::Schema(format!("missing feature column {label}"))),
            _ => return Err(Error::Schema(format!("duplicate feature column {label}"))),
        }
    }
    Ok(column_of)
}

/// Writes the dataset in benchmark CSV layout.
pub fn write_csv<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subject", "sessionIndex", "rep"];
    header.extend(FEATURE_LABELS);
    w.write_record(&header)?;
    for s in ds.samples() {
        let mut rec = vec![s.subject.clone(), s.session.to_string(), s.repetition.to_string()];
        rec.extend(s.vector.iter().map(|v| v.as_f64().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_normalized<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{NORMALIZED_MAGIC}")?;
    writeln!(w, "features {}", FEATURE_LABELS.join(" "))?;
    writeln!(w, "samples {}", ds.len())?;
    for s in ds.samples() {
        write!(w, "{} {} {}", s.subject, s.session, s.repetition)?;
        for v in s.vector.iter() {
            write!(w, " {}", v.as_f64())?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_normalized<T: Scalar, R: Read>(reader: R) -> Result<Dataset<T>> {
    let mut lines = BufReader::new(reader).lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Schema(format!("truncated normalized file: missing {what}")))
    };
    if next_line("version")?.trim() != NORMALIZED_MAGIC {
        return Err(Error::Schema("not a keydetect-dataset v1 file".into()));
    }
    let features = next_line("feature list")?;
    let labels: Vec<&str> = features.split_whitespace().collect();
    if labels.first() != Some(&"features") || labels[1..] != FEATURE_LABELS[..] {
        return Err(Error::Schema("feature list differs from the canonical layout".into()));
    }
    let count_line = next_line("sample count")?;
    let count: usize = count_line
        .strip_prefix("samples ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| Error::Schema("bad sample count line".into()))?;
    let mut samples = Vec::with_capacity(count);
    for row in 1..=count {
        let line = next_line("sample row")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 + N_FEATURES {
            return Err(Error::Schema(format!("row {row} has {} fields", parts.len())));
        }
        let bad = |m: String| Error::Value { row, message: m };
        let session = parts[1].parse().map_err(|_| bad("bad session".into()))?;
        let rep = parts[2].parse().map_err(|_| bad("bad repetition".into()))?;
        let mut values = [T::zero(); N_FEATURES];
        for (v, p) in values.iter_mut().zip(&parts[3..]) {
            *v = T::lit(p.parse::<f64>().map_err(|_| bad(format!("bad value {p:?}")))?);
        }
        let vector = TimingVector::new(values).map_err(|e| bad(e.to_string()))?;
        samples.push(KeystrokeSample::new(parts[0], session, rep, vector).map_err(|e| bad(e.to_string()))?);
    }
    Ok(Dataset::new(samples))
}

/// Loads either a benchmark CSV or a normalized dataset file, by content.
pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let mut first = String::new();
    BufReader::new(File::open(&path)?).read_line(&mut first)?;
    if first.trim() == NORMALIZED_MAGIC {
        read_normalized(File::open(path)?)
    } else {
        parse_csv(path)
    }
}

/// Removes every sample in which any feature's per-subject z-score magnitude
/// exceeds `z_cut`. Subject statistics are computed once over all of the
/// subject's samples. Returns the filtered dataset and the number removed.
pub fn filter_outliers<T: Scalar>(ds: &Dataset<T>, z_cut: f64) -> Result<(Dataset<T>, usize)> {
    if !(z_cut > 0.0) {
        return Err(Error::InvalidParameter(format!("z_cut must be positive, got {z_cut}")));
    }
    let floor = T::lit(1e-12);
    let cut = T::lit(z_cut);
    let mut kept = Vec::with_capacity(ds.len());
    let mut removed = 0;
    for i in 0..ds.subjects().len() {
        let samples = ds.samples_at(i);
        if samples.len() < 2 {
            kept.extend_from_slice(samples);
            continue;
        }
        let rows: Vec<&[T]> = samples.iter().map(|s| s.vector.as_slice()).collect();
        let stats = crate::stats::column_stats(&rows)?;
        for s in samples {
            let outlier = s.vector.iter().enumerate().any(|(f, &v)| {
                let d = (v - stats.mean[f]).abs();
                d > T::zero() && d / stats.std[f].max(floor) > cut
            });
            if outlier {
                removed += 1;
            } else {
                kept.push(s.clone());
            }
        }
    }
    Ok((Dataset::new(kept), removed))
}

/// Anomaly-detection protocol parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnomalyProtocol {
    /// Leading samples of the genuine subject used for training; the
    /// remainder form the genuine test set. Subjects need at least twice this many.
    pub train_reps: usize,
    /// Leading samples taken from every other subject as impostor attempts.
    pub impostor_reps: usize,
}

impl Default for AnomalyProtocol {
    fn default() -> Self {
        Self {
            train_reps: 200,
            impostor_reps: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnomalySplit<T> {
    pub subject: String,
    pub train: Vec<TimingVector<T>>,
    pub genuine_test: Vec<TimingVector<T>>,
    pub impostor_test: Vec<TimingVector<T>>,
}

/// Builds one split per subject. Deterministic.
///
/// Samples are in `(session, repetition)` order, so the leading impostor
/// samples of each subject are the first repetitions of session 1.
pub fn make_anomaly_splits<T: Scalar>(ds: &Dataset<T>, protocol: AnomalyProtocol) -> Result<Vec<AnomalySplit<T>>> {
    let needed = (2 * protocol.train_reps).max(protocol.impostor_reps);
    for (i, subject) in ds.subjects().iter().enumerate() {
        let count = ds.samples_at(i).len();
        if count < needed {
            return Err(Error::SubjectTooSmall {
                subject: subject.clone(),
                count,
                needed,
            });
        }
    }
    let vectors = |s: &[KeystrokeSample<T>]| s.iter().map(|s| s.vector).collect::<Vec<_>>();
    Ok(ds
        .subjects()
        .iter()
        .enumerate()
        .map(|(i, subject)| {
            let own = ds.samples_at(i);
            let impostor_test = (0..ds.subjects().len())
                .filter(|&j| j != i)
                .flat_map(|j| vectors(&ds.samples_at(j)[..protocol.impostor_reps]))
                .collect();
            AnomalySplit {
                subject: subject.clone(),
                train: vectors(&own[..protocol.train_reps]),
                genuine_test: vectors(&own[protocol.train_reps..]),
                impostor_test,
            }
        })
        .collect())
}

/// Impostor samples for hyperparameter tuning that never overlap the impostor
/// test set: `per_subject` samples from every other subject, starting right
/// after the ones used for testing.
pub fn tuning_impostors<T: Scalar>(
    ds: &Dataset<T>,
    subject: &str,
    protocol: AnomalyProtocol,
    per_subject: usize,
) -> Vec<TimingVector<T>> {
    ds.subjects()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.as_str() != subject)
        .flat_map(|(j, _)| {
            ds.samples_at(j)
                .iter()
                .skip(protocol.impostor_reps)
                .take(per_subject)
                .map(|s| s.vector)
        })
        .collect()
}

/// A labeled set of vectors; `origin` records the subject each vector came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet<T> {
    pub x: Vec<TimingVector<T>>,
    pub y: Vec<usize>,
    pub origin: Vec<String>,
}

impl<T: Scalar> LabeledSet<T> {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    fn push(&mut self, x: TimingVector<T>, y: usize, origin: &str) {
        self.x.push(x);
        self.y.push(y);
        self.origin.push(origin.to_string());
    }

    pub fn count_of(&self, label: usize) -> usize {
        self.y.iter().filter(|&&y| y == label).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSplit<T> {
    pub train: LabeledSet<T>,
    pub validation: LabeledSet<T>,
    pub test: LabeledSet<T>,
    /// Class index to class name (subject id, or `negative`).
    pub label_map: Vec<String>,
}

impl<T: Scalar> ClassSplit<T> {
    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn class_of(&self, name: &str) -> Option<usize> {
        self.label_map.iter().position(|l| l == name)
    }
}

pub const TEST_FRACTION: f64 = 0.25;
pub const VALIDATION_FRACTION: f64 = 0.10;

/// Stratified split of pre-grouped samples. Each group is shuffled with the
/// supplied RNG; 25% goes to test, then 10% of the remainder to validation.
pub(crate) fn stratified_split<T: Scalar>(
    groups: Vec<(usize, Vec<(TimingVector<T>, String)>)>,
    label_map: Vec<String>,
    rng: &mut impl rand::Rng,
) -> ClassSplit<T> {
    let mut split = ClassSplit {
        train: LabeledSet::default(),
        validation: LabeledSet::default(),
        test: LabeledSet::default(),
        label_map,
    };
    for (label, items) in groups {
        let n = items.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n_test = (n as f64 * TEST_FRACTION).round() as usize;
        let n_val = ((n - n_test) as f64 * VALIDATION_FRACTION).round() as usize;
        let mut test_idx = idx[..n_test].to_vec();
        let mut val_idx = idx[n_test..n_test + n_val].to_vec();
        let mut train_idx = idx[n_test + n_val..].to_vec();
        test_idx.sort_unstable();
        val_idx.sort_unstable();
        train_idx.sort_unstable();
        for (set, ids) in [
            (&mut split.test, test_idx),
            (&mut split.validation, val_idx),
            (&mut split.train, train_idx),
        ] {
            for i in ids {
                set.push(items[i].0, label, &items[i].1);
            }
        }
    }
    split
}

/// Stratified 75/25 train/test split with 10% of train held out for validation.
/// Subject `i` (in lexicographic order) gets class index `i`.
pub fn make_class_split<T: Scalar>(ds: &Dataset<T>, seed: u64) -> ClassSplit<T> {
    let mut rng = seed::rng(seed, "class-split");
    let groups = (0..ds.subjects().len())
        .map(|i| {
            let items = ds
                .samples_at(i)
                .iter()
                .map(|s| (s.vector, s.subject.clone()))
                .collect();
            (i, items)
        })
        .collect();
    stratified_split(groups, ds.subjects().to_vec(), &mut rng)
}

/// Counts samples per subject.
pub fn subject_counts<T: Scalar>(ds: &Dataset<T>) -> HashMap<String, usize> {
    (0..ds.subjects().len())
        .map(|i| (ds.subjects()[i].clone(), ds.samples_at(i).len()))
        .collect()
}

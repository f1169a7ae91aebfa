//! The negative-class experiment: a known set of subjects plus one extra
//! class pooling samples from everyone else.

use rand::seq::index::sample;

use super::{predict_set, Classifier};
use crate::dataset::{stratified_split, ClassSplit, Dataset};
use crate::error::{Error, Result};
use crate::eval::{classifier_metrics, f_score};
use crate::scalar::Scalar;

pub const NEGATIVE_LABEL: &str = "negative";
pub const DEFAULT_KNOWN_SUBJECTS: usize = 31;
pub const NEGATIVE_PER_SUBJECT: usize = 20;

/// Classes `0..n_known` are the first `n_known` subjects in lexicographic
/// order; class `n_known` holds `per_subject` samples drawn without
/// replacement from each remaining subject. The result is split 75/25 with
/// 10% of train held out, stratified per class.
pub fn build_negative_dataset<T: Scalar>(
    ds: &Dataset<T>,
    n_known: usize,
    per_subject: usize,
    seed: u64,
) -> Result<ClassSplit<T>> {
    let subjects = ds.subjects();
    if subjects.len() <= n_known {
        return Err(Error::InsufficientData {
            needed: n_known + 1,
            got: subjects.len(),
        });
    }
    let mut rng = crate::seed::rng(seed, "negative-class");
    let mut groups = Vec::with_capacity(n_known + 1);
    for (i, _) in subjects.iter().enumerate().take(n_known) {
        let items = ds.samples_at(i).iter().map(|s| (s.vector, s.subject.clone())).collect();
        groups.push((i, items));
    }
    let mut pool = Vec::new();
    for i in n_known..subjects.len() {
        let own = ds.samples_at(i);
        if own.len() < per_subject {
            return Err(Error::SubjectTooSmall {
                subject: subjects[i].clone(),
                count: own.len(),
                needed: per_subject,
            });
        }
        let mut picked = sample(&mut rng, own.len(), per_subject).into_vec();
        picked.sort_unstable();
        pool.extend(picked.into_iter().map(|j| (own[j].vector, own[j].subject.clone())));
    }
    groups.push((n_known, pool));
    let mut label_map: Vec<String> = subjects[..n_known].to_vec();
    label_map.push(NEGATIVE_LABEL.to_string());
    Ok(stratified_split(groups, label_map, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeClassReport {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f_score: f64,
    pub confusion: Vec<Vec<usize>>,
}

/// Overall accuracy plus one-vs-rest metrics for the last (negative) class
/// on the test split.
pub fn evaluate_negative_class<T: Scalar, C: Classifier<T> + ?Sized>(
    model: &C,
    split: &ClassSplit<T>,
) -> Result<NegativeClassReport> {
    let preds = predict_set(model, &split.test)?;
    report_from_predictions(&preds, &split.test.y, split.n_classes())
}

pub fn report_from_predictions(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<NegativeClassReport> {
    let m = classifier_metrics(preds, labels, n_classes)?;
    let neg = m.per_class[n_classes - 1];
    Ok(NegativeClassReport {
        accuracy: m.accuracy,
        recall: neg.recall,
        precision: neg.precision,
        f_score: f_score(neg.precision, neg.recall),
        confusion: m.confusion,
    })
}

//! Multi-class subject identification: fully connected and 1-D convolutional
//! networks, a random forest, and a linear multiclass SVM.

pub mod forest;
pub mod negative;
pub mod neural;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::eval::{classifier_metrics, ClassifierMetrics};
use crate::nn::argmax;
use crate::scalar::Scalar;

pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use negative::{build_negative_dataset, evaluate_negative_class, NegativeClassReport, NEGATIVE_LABEL};
pub use neural::{train_nn, Architecture, NnClassifier, NnReport};
pub use svm::{train_multiclass_svm, train_multiclass_svm_grid, LinearSvmModel, SvmParams, LAMBDA_GRID};

pub trait Classifier<T: Scalar>: Send + Sync {
    fn n_classes(&self) -> usize;

    /// One score per class; larger means more likely.
    fn scores(&self, x: &[T]) -> Result<Vec<T>>;

    /// Highest-scoring class, lowest index on ties.
    fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }
}

pub fn predict_set<T: Scalar, C: Classifier<T> + ?Sized>(model: &C, set: &LabeledSet<T>) -> Result<Vec<usize>> {
    set.x.par_iter().map(|x| model.predict(x)).collect()
}

pub fn evaluate<T: Scalar, C: Classifier<T> + ?Sized>(model: &C, set: &LabeledSet<T>) -> Result<ClassifierMetrics> {
    let preds = predict_set(model, set)?;
    classifier_metrics(&preds, &set.y, model.n_classes())
}

/// The classifier families the command line can train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Fc,
    Cnn1d,
    /// 1-D CNN with an extra class pooling unseen subjects.
    Cnn1dNeg,
    RandomForest,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Fc,
        ModelKind::Cnn1d,
        ModelKind::Cnn1dNeg,
        ModelKind::RandomForest,
        ModelKind::Svm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Fc => "fc",
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Cnn1dNeg => "cnn1d-neg",
            ModelKind::RandomForest => "rf",
            ModelKind::Svm => "svm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model {s:?} (expected fc, cnn1d, cnn1d-neg, rf or svm)")))
    }
}

/// Any trained classifier, with the class names it predicts.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel<T> {
    Nn(NnClassifier<T>),
    Forest(ForestModel<T>),
    Svm(LinearSvmModel<T>),
}

impl<T: Scalar> Classifier<T> for TrainedModel<T> {
    fn n_classes(&self) -> usize {
        match self {
            TrainedModel::Nn(m) => m.n_classes(),
            TrainedModel::Forest(m) => m.n_classes(),
            TrainedModel::Svm(m) => m.n_classes(),
        }
    }

    fn scores(&self, x: &[T]) -> Result<Vec<T>> {
        match self {
            TrainedModel::Nn(m) => m.scores(x),
            TrainedModel::Forest(m) => m.scores(x),
            TrainedModel::Svm(m) => m.scores(x),
        }
    }

    fn predict(&self, x: &[T]) -> Result<usize> {
        match self {
            TrainedModel::Nn(m) => m.predict(x),
            TrainedModel::Forest(m) => m.predict(x),
            TrainedModel::Svm(m) => m.predict(x),
        }
    }
}

pub(crate) fn rows<T: Scalar>(set: &LabeledSet<T>) -> Vec<Vec<T>> {
    set.x.iter().map(|v| v.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<f64>);

    impl Classifier<f64> for Fixed {
        fn n_classes(&self) -> usize {
            self.0.len()
        }

        fn scores(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn argmax_rule() {
        assert_eq!(Fixed(vec![0.1, 0.9, 0.3]).predict(&[]).unwrap(), 1);
        assert_eq!(Fixed(vec![1.0]).predict(&[]).unwrap(), 0);
    }

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.tag().parse::<ModelKind>().unwrap(), k);
        }
        assert!("knn".parse::<ModelKind>().is_err());
    }
}

//! Classifier experiments shared by `keydetect train` and the acceptance runs.

use keydetect_core::classifiers::forest::{train_random_forest, ForestParams};
use keydetect_core::classifiers::negative::{
    build_negative_dataset, report_from_predictions, NegativeClassReport, DEFAULT_KNOWN_SUBJECTS,
    NEGATIVE_PER_SUBJECT,
};
use keydetect_core::classifiers::neural::{train_nn, Architecture};
use keydetect_core::classifiers::svm::{train_multiclass_svm_grid, SvmParams, LAMBDA_GRID};
use keydetect_core::classifiers::{predict_set, ModelKind, TrainedModel};
use keydetect_core::dataset::{make_class_split, ClassSplit, Dataset};
use keydetect_core::eval::{classifier_metrics, ClassifierMetrics};
use keydetect_core::nn::{History, TrainConfig};
use keydetect_core::Result;
use serde_json::{json, Value};

/// Neural networks train in single precision; everything else shares the
/// same `f32` dataset so one split serves every model.
pub type Real = f32;

#[derive(Debug, Clone)]
pub struct ClassifierOptions {
    pub seed: u64,
    pub epochs: usize,
    pub trees: usize,
    pub known_subjects: usize,
    pub negative_per_subject: usize,
}

impl Default for ClassifierOptions {
    fn default() -> Self {
        Self {
            seed: crate::args::DEFAULT_SEED,
            epochs: TrainConfig::default().epochs,
            trees: ForestParams::default().n_trees,
            known_subjects: DEFAULT_KNOWN_SUBJECTS,
            negative_per_subject: NEGATIVE_PER_SUBJECT,
        }
    }
}

pub struct ClassifierRun {
    pub kind: ModelKind,
    pub model: TrainedModel<Real>,
    pub split: ClassSplit<Real>,
    pub metrics: ClassifierMetrics,
    /// Present for `cnn1d-neg`.
    pub negative: Option<NegativeClassReport>,
    pub history: Option<History>,
    /// Hyperparameters actually used, for the run log.
    pub effective: Value,
}

impl ClassifierRun {
    pub fn accuracy(&self) -> f64 {
        self.metrics.accuracy
    }
}

pub fn train_classifier(ds: &Dataset<Real>, kind: ModelKind, opts: &ClassifierOptions) -> Result<ClassifierRun> {
    let split = match kind {
        ModelKind::Cnn1dNeg => build_negative_dataset(ds, opts.known_subjects, opts.negative_per_subject, opts.seed)?,
        _ => make_class_split(ds, opts.seed),
    };
    let split_info = json!({
        "classes": split.n_classes(),
        "train": split.train.len(),
        "validation": split.validation.len(),
        "test": split.test.len(),
    });

    let (model, history, effective) = match kind {
        ModelKind::Fc | ModelKind::Cnn1d | ModelKind::Cnn1dNeg => {
            let arch = if kind == ModelKind::Fc {
                Architecture::FullyConnected
            } else {
                Architecture::Cnn1d
            };
            let config = TrainConfig {
                epochs: opts.epochs,
                seed: opts.seed,
                ..TrainConfig::default()
            };
            let (nn, report) = train_nn(arch, &split, &config)?;
            let effective = json!({
                "architecture": format!("{arch:?}"),
                "precision": "f32",
                "epochs": config.epochs,
                "batch_size": config.batch_size,
                "early_stop_patience": config.early_stop_patience,
                "adam": format!("{:?}", config.adam),
                "plateau": format!("{:?}", config.plateau),
                "epochs_run": report.history.epochs.len(),
                "best_epoch": report.history.best_epoch,
            });
            (TrainedModel::Nn(nn), Some(report.history), effective)
        }
        ModelKind::RandomForest => {
            let params = ForestParams {
                n_trees: opts.trees,
                seed: opts.seed,
                ..ForestParams::default()
            };
            let forest = train_random_forest(&split, params)?;
            let effective = json!({
                "n_trees": params.n_trees,
                "max_features": params.max_features,
                "bootstrap": params.bootstrap,
            });
            (TrainedModel::Forest(forest), None, effective)
        }
        ModelKind::Svm => {
            let base = SvmParams {
                seed: opts.seed,
                ..SvmParams::default()
            };
            let (svm, grid) = train_multiclass_svm_grid(&split, &LAMBDA_GRID, base)?;
            let effective = json!({
                "lambda_grid": LAMBDA_GRID,
                "validation_accuracy": grid,
                "lambda": svm.lambda,
                "epochs": base.epochs,
                "eta0": base.eta0,
            });
            (TrainedModel::Svm(svm), None, effective)
        }
    };

    let preds = predict_set(&model, &split.test)?;
    let metrics = classifier_metrics(&preds, &split.test.y, split.n_classes())?;
    let negative = match kind {
        ModelKind::Cnn1dNeg => Some(report_from_predictions(&preds, &split.test.y, split.n_classes())?),
        _ => None,
    };
    let effective = json!({
        "model": kind.tag(),
        "seed": opts.seed,
        "split": split_info,
        "params": effective,
    });
    Ok(ClassifierRun {
        kind,
        model,
        split,
        metrics,
        negative,
        history,
        effective,
    })
}

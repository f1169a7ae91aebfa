use super::{rows, Classifier};
use crate::dataset::ClassSplit;
use crate::error::{Error, Result};
use crate::features::N_FEATURES;
use crate::nn::{train_network, Batch, History, LayerSpec, Network, TrainConfig};
use crate::scalar::Scalar;
use crate::stats::Standardizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// 31 → 80 → 60 → classes, ReLU between dense layers.
    FullyConnected,
    /// Two same-padded kernel-3 convolutions (16 then 32 channels),
    /// flattened to 992, then 128 → classes.
    Cnn1d,
}

impl Architecture {
    pub fn input_shape(self) -> Vec<usize> {
        match self {
            Architecture::FullyConnected => vec![N_FEATURES],
            Architecture::Cnn1d => vec![1, N_FEATURES],
        }
    }

    pub fn layers(self, n_classes: usize) -> Vec<LayerSpec> {
        match self {
            Architecture::FullyConnected => vec![
                LayerSpec::Dense {
                    input: N_FEATURES,
                    output: 80,
                },
                LayerSpec::Relu,
                LayerSpec::Dense { input: 80, output: 60 },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    input: 60,
                    output: n_classes,
                },
            ],
            Architecture::Cnn1d => vec![
                LayerSpec::Conv1d {
                    in_channels: 1,
                    out_channels: 16,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Conv1d {
                    in_channels: 16,
                    out_channels: 32,
                    kernel: 3,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    input: 32 * N_FEATURES,
                    output: 128,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    input: 128,
                    output: n_classes,
                },
            ],
        }
    }
}

/// A network together with the standardization fitted on its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct NnClassifier<T> {
    pub standardizer: Standardizer<T>,
    pub network: Network<T>,
    pub label_map: Vec<String>,
}

impl<T: Scalar> Classifier<T> for NnClassifier<T> {
    fn n_classes(&self) -> usize {
        self.network.output_len()
    }

    fn scores(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.standardizer.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.standardizer.dim(),
                got: x.len(),
            });
        }
        self.network.logits(&self.standardizer.transform(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnReport {
    pub history: History,
    pub test_accuracy: f64,
}

/// Fits standardization on the training rows, trains with Adam and the
/// plateau schedule (validation split drives both scheduling and early
/// stopping), and reports test accuracy.
pub fn train_nn<T: Scalar>(
    arch: Architecture,
    split: &ClassSplit<T>,
    config: &TrainConfig,
) -> Result<(NnClassifier<T>, NnReport)> {
    if split.train.is_empty() {
        return Err(Error::EmptySet);
    }
    let standardizer = Standardizer::fit(&rows(&split.train))?;
    let std_rows = |s: &crate::dataset::LabeledSet<T>| standardizer.transform_all(&rows(s));
    let (train_x, val_x) = (std_rows(&split.train), std_rows(&split.validation));
    let mut rng = crate::seed::rng(config.seed, "nn-init");
    let mut network = Network::new(arch.input_shape(), arch.layers(split.n_classes()), &mut rng)?;
    let history = train_network(
        &mut network,
        Batch::new(&train_x, &split.train.y)?,
        Batch::new(&val_x, &split.validation.y)?,
        config,
    )?;
    let model = NnClassifier {
        standardizer,
        network,
        label_map: split.label_map.clone(),
    };
    let test_accuracy = if split.test.is_empty() {
        f64::NAN
    } else {
        super::evaluate(&model, &split.test)?.accuracy
    };
    Ok((model, NnReport { history, test_accuracy }))
}

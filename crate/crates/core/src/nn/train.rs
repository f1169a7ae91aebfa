//! Minibatch training with Adam, the plateau schedule, and early stopping.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::network::Network;
use super::optim::{softmax_cross_entropy, Adam, AdamConfig, Plateau, PlateauConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

// Samples per parallel work item. Fixed so that the summation order, and
// therefore the result, does not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without validation improvement.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
            epochs: 200,
            batch_size: 64,
            early_stop_patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Labeled rows for one phase of training.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    pub x: &'a [Vec<T>],
    pub y: &'a [usize],
}

impl<'a, T> Batch<'a, T> {
    pub fn new(x: &'a [Vec<T>], y: &'a [usize]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Summed loss and summed parameter gradients over the selected rows.
pub fn loss_and_gradients<T: Scalar>(net: &Network<T>, data: Batch<'_, T>, idx: &[usize]) -> Result<(T, Vec<Vec<T>>)> {
    let parts: Vec<Result<(T, Vec<Vec<T>>)>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grads = net.zero_grads();
            let mut loss = T::zero();
            for &i in chunk {
                let acts = net.forward_sample(&data.x[i])?;
                let (l, g) = softmax_cross_entropy(acts.last().expect("non-empty"), data.y[i])?;
                loss += l;
                net.backward_sample(&acts, &g, &mut grads)?;
            }
            Ok((loss, grads))
        })
        .collect();
    let mut total = T::zero();
    let mut grads = net.zero_grads();
    for part in parts {
        let (l, g) = part?;
        total += l;
        for (acc, gi) in grads.iter_mut().zip(g) {
            for (a, b) in acc.iter_mut().zip(gi) {
                *a += b;
            }
        }
    }
    Ok((total, grads))
}

/// Mean softmax cross-entropy over all rows.
pub fn mean_loss<T: Scalar>(net: &Network<T>, data: Batch<'_, T>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptySet);
    }
    let parts: Vec<Result<f64>> = (0..data.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK * 4)
        .map(|chunk| {
            let mut s = 0.0;
            for &i in chunk {
                let logits = net.logits(&data.x[i])?;
                s += softmax_cross_entropy(&logits, data.y[i])?.0.as_f64();
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for p in parts {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

/// Trains in place and leaves the network holding the weights from the
/// epoch with the lowest validation loss. With an empty validation set the
/// training loss drives scheduling and stopping.
pub fn train_network<T: Scalar>(
    net: &mut Network<T>,
    train: Batch<'_, T>,
    validation: Batch<'_, T>,
    config: &TrainConfig,
) -> Result<History> {
    if train.is_empty() {
        return Err(Error::EmptySet);
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidParameter("batch size and epochs must be positive".into()));
    }
    config.plateau.validate()?;
    let mut rng = crate::seed::rng(config.seed, "nn-shuffle");
    let mut adam = Adam::new(config.adam, net.params());
    let mut sched = Plateau::new(config.plateau, config.adam.lr);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History::default();
    let mut best = (f64::INFINITY, net.params().to_vec(), 0usize);
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for idx in order.chunks(config.batch_size) {
            let (loss, mut grads) = loss_and_gradients(net, train, idx)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss;
            let inv = T::one() / T::from_usize_lossy(idx.len());
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            adam.step(net.params_mut(), &grads)?;
        }
        let train_loss = epoch_loss / train.len() as f64;
        let validation_loss = if validation.is_empty() {
            train_loss
        } else {
            mean_loss(net, validation)?
        };
        if !validation_loss.is_finite() || net.params().iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            lr: adam.lr,
        });
        adam.lr = sched.step(validation_loss);

        if validation_loss <= best.0 - config.plateau.threshold {
            best = (validation_loss, net.params().to_vec(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = best.2;
    net.params_mut().clone_from_slice(&best.1);
    Ok(history)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict<T: Scalar>(net: &Network<T>, x: &[T]) -> Result<(usize, Vec<T>)> {
    let logits = net.logits(x)?;
    Ok((argmax(&logits), logits))
}

pub fn predict_all<T: Scalar>(net: &Network<T>, xs: &[Vec<T>]) -> Result<Vec<usize>> {
    xs.par_iter().map(|x| net.logits(x).map(|l| argmax(&l))).collect()
}

//! Linear multiclass SVM with the Crammer-Singer hinge loss.
//!
//! Minimizes `½ Σ_j ‖w_j‖² + λ Σ_i max(0, 1 + max_{j≠y_i} s_j(x_i) − s_{y_i}(x_i))`
//! with `s_j(x) = w_j·x + b_j` (biases unregularized), by seeded stochastic
//! subgradient descent with iterate averaging.

use rand::seq::SliceRandom;

use super::{rows, Classifier};
use crate::dataset::ClassSplit;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::Standardizer;

pub const LAMBDA_GRID: [f64; 3] = [0.1, 0.01, 0.001];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step size of the `η0 / (1 + η0·t/(λn))` schedule.
    pub eta0: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            epochs: 30,
            eta0: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel<T> {
    pub standardizer: Standardizer<T>,
    /// `weights[j]` is `w_j`.
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
    pub lambda: f64,
    pub label_map: Vec<String>,
    /// Objective of the returned iterate after each epoch (best so far).
    pub objective_trace: Vec<f64>,
}

impl<T: Scalar> LinearSvmModel<T> {
    fn raw_scores(weights: &[Vec<T>], biases: &[T], z: &[T]) -> Vec<T> {
        weights
            .iter()
            .zip(biases)
            .map(|(w, &b)| w.iter().zip(z).map(|(&a, &c)| a * c).sum::<T>() + b)
            .collect()
    }
}

impl<T: Scalar> Classifier<T> for LinearSvmModel<T> {
    fn n_classes(&self) -> usize {
        self.weights.len()
    }

    fn scores(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.standardizer.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.standardizer.dim(),
                got: x.len(),
            });
        }
        Ok(Self::raw_scores(&self.weights, &self.biases, &self.standardizer.transform(x)))
    }
}

/// Crammer-Singer hinge of one standardized row, and the runner-up class.
fn hinge<T: Scalar>(scores: &[T], y: usize) -> (f64, usize) {
    let mut other = usize::MAX;
    for (j, &s) in scores.iter().enumerate() {
        if j != y && (other == usize::MAX || s > scores[other]) {
            other = j;
        }
    }
    if other == usize::MAX {
        return (0.0, y);
    }
    ((1.0 + scores[other].as_f64() - scores[y].as_f64()).max(0.0), other)
}

/// `½ Σ‖w_j‖² + λ Σ_i hinge_i` on standardized rows.
pub fn objective<T: Scalar>(weights: &[Vec<T>], biases: &[T], z: &[Vec<T>], y: &[usize], lambda: f64) -> f64 {
    let reg: f64 = weights.iter().flatten().map(|w| w.as_f64().powi(2)).sum::<f64>() / 2.0;
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(x, &yi)| hinge(&LinearSvmModel::raw_scores(weights, biases, x), yi).0)
        .sum();
    reg + lambda * loss
}

pub fn train_multiclass_svm<T: Scalar>(split: &ClassSplit<T>, params: SvmParams) -> Result<LinearSvmModel<T>> {
    if split.train.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(params.lambda > 0.0) || !(params.eta0 > 0.0) || params.epochs == 0 {
        return Err(Error::InvalidParameter(format!("bad SVM parameters {params:?}")));
    }
    let standardizer = Standardizer::fit(&rows(&split.train))?;
    let z = standardizer.transform_all(&rows(&split.train));
    let y = &split.train.y;
    let (n, d, k) = (z.len(), standardizer.dim(), split.n_classes());
    // Per-sample objective: (reg/2)‖W‖² + hinge_i, i.e. the full objective / (λn).
    let reg = 1.0 / (params.lambda * n as f64);

    let mut w = vec![vec![0.0f64; d]; k];
    let mut b = vec![0.0f64; k];
    let mut w_avg = w.clone();
    let mut b_avg = b.clone();
    let mut averaged = 0u64;
    let mut rng = crate::seed::rng(params.seed, "svm-sgd");
    let mut order: Vec<usize> = (0..n).collect();
    let zf: Vec<Vec<f64>> = z.iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();

    let to_t = |w: &[Vec<f64>], b: &[f64]| -> (Vec<Vec<T>>, Vec<T>) {
        (
            w.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect(),
            b.iter().map(|&v| T::lit(v)).collect(),
        )
    };
    let mut best: Option<(f64, Vec<Vec<T>>, Vec<T>)> = None;
    let mut trace = Vec::with_capacity(params.epochs);
    let mut t = 0u64;
    for _epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = params.eta0 / (1.0 + params.eta0 * reg * t as f64);
            t += 1;
            let scores = LinearSvmModel::raw_scores(&w, &b, &zf[i]);
            let (loss, other) = hinge(&scores, y[i]);
            let shrink = 1.0 - eta * reg;
            w.iter_mut().flatten().for_each(|v| *v *= shrink);
            if loss > 0.0 {
                for (wo, &x) in w[other].iter_mut().zip(&zf[i]) {
                    *wo -= eta * x;
                }
                for (wy, &x) in w[y[i]].iter_mut().zip(&zf[i]) {
                    *wy += eta * x;
                }
                b[other] -= eta;
                b[y[i]] += eta;
            }
            averaged += 1;
            let a = 1.0 / averaged as f64;
            for (ra, r) in w_avg.iter_mut().zip(&w) {
                for (va, &v) in ra.iter_mut().zip(r) {
                    *va += (v - *va) * a;
                }
            }
            for (va, &v) in b_avg.iter_mut().zip(&b) {
                *va += (v - *va) * a;
            }
        }
        let (wt, bt) = to_t(&w_avg, &b_avg);
        let obj = objective(&wt, &bt, &z, y, params.lambda);
        if best.as_ref().is_none_or(|(o, _, _)| obj < *o) {
            best = Some((obj, wt, bt));
        }
        trace.push(best.as_ref().expect("set above").0);
    }
    let (_, weights, biases) = best.expect("at least one epoch");
    Ok(LinearSvmModel {
        standardizer,
        weights,
        biases,
        lambda: params.lambda,
        label_map: split.label_map.clone(),
        objective_trace: trace,
    })
}

/// Trains one model per λ and keeps the best validation accuracy (earliest
/// grid entry on ties). Without a validation set the first λ is used.
pub fn train_multiclass_svm_grid<T: Scalar>(
    split: &ClassSplit<T>,
    grid: &[f64],
    base: SvmParams,
) -> Result<(LinearSvmModel<T>, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty λ grid".into()));
    }
    let mut scored = Vec::new();
    let mut best: Option<(f64, LinearSvmModel<T>)> = None;
    for &lambda in grid {
        let m = train_multiclass_svm(split, SvmParams { lambda, ..base })?;
        let acc = if split.validation.is_empty() {
            0.0
        } else {
            super::evaluate(&m, &split.validation)?.accuracy
        };
        scored.push((lambda, acc));
        if best.as_ref().is_none_or(|(a, _)| acc > *a) {
            best = Some((acc, m));
        }
    }
    Ok((best.expect("non-empty grid").1, scored))
}

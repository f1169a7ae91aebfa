//! ν one-class SVM with an RBF kernel, trained by pairwise (SMO) updates.
//!
//! Dual problem, with `C = 1 / (ν n)`:
//!
//! ```text
//! min ½ αᵀ K α   s.t.  0 ≤ αᵢ ≤ C,  Σ αᵢ = 1
//! ```
//!
//! The decision value of a point is `Σ αᵢ K(svᵢ, x) − ρ`; the anomaly score
//! is its negation, `ρ − Σ αᵢ K(svᵢ, x)`, so that higher means more anomalous
//! like every other detector.

use crate::error::{Error, Result};
use crate::eval::{equal_error_rate, ScoredTestSet};
use crate::scalar::Scalar;
use crate::stats::Standardizer;

use super::AnomalyScorer;

/// The ν grid searched per subject.
pub const NU_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcSvmParams {
    pub nu: f64,
    /// RBF width; `None` means `1 / dim`.
    pub gamma: Option<f64>,
    /// Stop once the maximal KKT violation is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OcSvmParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            gamma: None,
            tol: 1e-4,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcSvmModel<T> {
    pub support_vectors: Vec<Vec<T>>,
    pub alphas: Vec<T>,
    pub rho: T,
    pub gamma: T,
    pub nu: T,
    /// Maximal KKT violation at termination.
    pub kkt_residual: T,
    pub iterations: usize,
}

pub fn rbf<T: Scalar>(a: &[T], b: &[T], gamma: T) -> T {
    let d2: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

fn within_upper<T: Scalar>(a: T, c: T) -> bool {
    a < c
}

fn within_lower<T: Scalar>(a: T) -> bool {
    a > T::zero()
}

/// Fits a ν-one-class SVM on `train` (each row one vector).
pub fn fit_ocsvm<T: Scalar, R: AsRef<[T]>>(train: &[R], params: OcSvmParams) -> Result<OcSvmModel<T>> {
    let n = train.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let dim = train[0].as_ref().len();
    if let Some(r) = train.iter().find(|r| r.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: r.as_ref().len(),
        });
    }
    if !(params.nu > 0.0 && params.nu <= 1.0) {
        return Err(Error::InvalidParameter(format!("nu must be in (0, 1], got {}", params.nu)));
    }
    let gamma_f = params.gamma.unwrap_or(1.0 / dim as f64);
    if !(gamma_f > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma_f}")));
    }
    let gamma = T::lit(gamma_f);
    let tol = T::lit(params.tol);

    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        k[i * n + i] = T::one();
        for j in 0..i {
            let v = rbf(train[i].as_ref(), train[j].as_ref(), gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }

    let c = T::one() / (T::lit(params.nu) * T::from_usize_lossy(n));
    let mut alpha = vec![T::zero(); n];
    let mut remaining = T::one();
    for a in alpha.iter_mut() {
        if remaining <= T::zero() {
            break;
        }
        *a = remaining.min(c);
        remaining -= *a;
    }
    let mut grad: Vec<T> = (0..n)
        .map(|i| (0..n).map(|j| k[i * n + j] * alpha[j]).sum())
        .collect();

    let tau = T::lit(1e-12);
    let mut iterations = 0;
    let residual = loop {
        // i maximises -G over the indices that may still increase.
        let mut gmax = T::neg_infinity();
        let mut i_sel = None;
        for t in 0..n {
            if within_upper(alpha[t], c) && -grad[t] >= gmax && (-grad[t] > gmax || i_sel.is_none()) {
                gmax = -grad[t];
                i_sel = Some(t);
            }
        }
        let mut gmin = T::infinity();
        let mut j_sel = None;
        let mut best_obj = T::infinity();
        for t in 0..n {
            if !within_lower(alpha[t]) {
                continue;
            }
            gmin = gmin.min(-grad[t]);
            let Some(i) = i_sel else { continue };
            let b = gmax + grad[t];
            if b > T::zero() {
                let mut a = k[i * n + i] + k[t * n + t] - T::lit(2.0) * k[i * n + t];
                if a <= T::zero() {
                    a = tau;
                }
                let obj = -(b * b) / a;
                if obj < best_obj {
                    best_obj = obj;
                    j_sel = Some(t);
                }
            }
        }
        let violation = gmax - gmin;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break violation.max(T::zero());
        };
        if violation <= tol {
            break violation;
        }
        if iterations >= params.max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: violation.as_f64(),
            });
        }
        iterations += 1;

        let mut a = k[i * n + i] + k[j * n + j] - T::lit(2.0) * k[i * n + j];
        if a <= T::zero() {
            a = tau;
        }
        let b = grad[j] - grad[i];
        let delta = (b / a).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        if c - alpha[i] < T::epsilon() * c {
            alpha[i] = c;
        }
        if alpha[j] < T::epsilon() * c {
            alpha[j] = T::zero();
        }
        for t in 0..n {
            grad[t] += delta * (k[t * n + i] - k[t * n + j]);
        }
    };

    let rho = compute_rho(&alpha, &grad, c);
    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for (t, &a) in alpha.iter().enumerate() {
        if a > T::zero() {
            support_vectors.push(train[t].as_ref().to_vec());
            alphas.push(a);
        }
    }
    Ok(OcSvmModel {
        support_vectors,
        alphas,
        rho,
        gamma,
        nu: T::lit(params.nu),
        kkt_residual: residual,
        iterations,
    })
}

// Free support vectors sit exactly on the boundary; otherwise take the
// midpoint of the feasible interval.
fn compute_rho<T: Scalar>(alpha: &[T], grad: &[T], c: T) -> T {
    let mut free_sum = T::zero();
    let mut free_n = 0usize;
    let mut lb = T::neg_infinity();
    let mut ub = T::infinity();
    for (&a, &g) in alpha.iter().zip(grad) {
        if a >= c {
            lb = lb.max(g);
        } else if a <= T::zero() {
            ub = ub.min(g);
        } else {
            free_sum += g;
            free_n += 1;
        }
    }
    if free_n > 0 {
        free_sum / T::from_usize_lossy(free_n)
    } else if lb.is_finite() && ub.is_finite() {
        (lb + ub) / T::lit(2.0)
    } else if lb.is_finite() {
        lb
    } else {
        ub
    }
}

impl<T: Scalar> OcSvmModel<T> {
    /// `Σ αᵢ K(svᵢ, x)`.
    pub fn kernel_sum(&self, x: &[T]) -> T {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, &a)| a * rbf(sv, x, self.gamma))
            .sum()
    }

    pub fn decision_value(&self, x: &[T]) -> T {
        self.kernel_sum(x) - self.rho
    }

    /// True when `x` lies outside the boundary by more than the solver's
    /// final KKT residual. Free support vectors can land within that band on
    /// either side of zero, so their sign carries no information.
    pub fn is_outlier(&self, x: &[T]) -> bool {
        self.decision_value(x) < -self.kkt_residual
    }

    /// Fraction of `rows` flagged by [`Self::is_outlier`].
    pub fn outlier_fraction<R: AsRef<[T]>>(&self, rows: &[R]) -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().filter(|r| self.is_outlier(r.as_ref())).count() as f64 / rows.len() as f64
    }

    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }
}

impl<T: Scalar> AnomalyScorer<T> for OcSvmModel<T> {
    fn score(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.rho - self.kernel_sum(x))
    }
}

/// `score_ocsvm`: `ρ − Σ αᵢ K(svᵢ, x)`.
pub fn score_ocsvm<T: Scalar>(m: &OcSvmModel<T>, x: &[T]) -> Result<T> {
    m.score(x)
}

/// One-class SVM operating on standardized features (scaling fitted on the
/// training rows), as used in the anomaly benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct OcSvmDetector<T> {
    pub standardizer: Standardizer<T>,
    pub model: OcSvmModel<T>,
}

impl<T: Scalar> OcSvmDetector<T> {
    pub fn fit<R: AsRef<[T]>>(train: &[R], params: OcSvmParams) -> Result<Self> {
        let standardizer = Standardizer::fit(train)?;
        let model = fit_ocsvm(&standardizer.transform_all(train), params)?;
        Ok(Self { standardizer, model })
    }

    /// Picks ν from `grid` by the EER obtained when training on the first half
    /// of `train` and scoring the second half against `impostors`, then refits
    /// on all of `train`. Ties go to the earlier grid entry.
    pub fn fit_tuned<R: AsRef<[T]>>(
        train: &[R],
        impostors: &[R],
        grid: &[f64],
        base: OcSvmParams,
    ) -> Result<Self> {
        let half = train.len() / 2;
        let (fit_part, held_out) = train.split_at(half);
        let mut best: Option<(f64, f64)> = None;
        for &nu in grid {
            let det = match Self::fit(fit_part, OcSvmParams { nu, ..base }) {
                Ok(d) => d,
                Err(Error::NonConvergence { .. }) => continue,
                Err(e) => return Err(e),
            };
            let scores = ScoredTestSet {
                genuine: held_out.iter().map(|x| det.score(x.as_ref())).collect::<Result<Vec<T>>>()?,
                impostor: impostors.iter().map(|x| det.score(x.as_ref())).collect::<Result<Vec<T>>>()?,
            };
            let eer = equal_error_rate(&scores)?;
            if best.is_none_or(|(b, _)| eer < b) {
                best = Some((eer, nu));
            }
        }
        let nu = best.map_or(base.nu, |(_, nu)| nu);
        Self::fit(train, OcSvmParams { nu, ..base })
    }
}

impl<T: Scalar> AnomalyScorer<T> for OcSvmDetector<T> {
    fn score(&self, x: &[T]) -> Result<T> {
        self.model.score(&self.standardizer.transform(x))
    }
}

//! Softmax cross-entropy, Adam, and the plateau learning-rate schedule.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Returns `(−log softmax(logits)[label], softmax − one_hot)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::ShapeMismatch(format!("label {label} for {} logits", logits.len())));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<T> = exps.into_iter().map(|e| e / sum).collect();
    grad[label] -= T::one();
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub lr: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Vec<T>]) -> Self {
        let zeros: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        Self {
            config,
            lr: config.lr,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [Vec<T>], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch("parameter block count".into()));
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.t));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.t));
        let (lr, eps) = (T::lit(self.lr), T::lit(c.eps));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != g.len() {
                return Err(Error::ShapeMismatch("gradient length".into()));
            }
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    pub factor: f64,
    pub patience: usize,
    /// Minimum absolute decrease that counts as an improvement.
    pub threshold: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.1,
            patience: 5,
            threshold: 1e-4,
            min_lr: 1e-6,
        }
    }
}

impl PlateauConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) || self.patience == 0 || !(self.min_lr >= 0.0) {
            return Err(Error::InvalidParameter(format!("bad plateau schedule {self:?}")));
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// epochs pass without an improvement of at least `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    pub config: PlateauConfig,
    pub lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl Plateau {
    pub fn new(config: PlateauConfig, lr: f64) -> Self {
        Self {
            config,
            lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn step(&mut self, validation_loss: f64) -> f64 {
        if validation_loss <= self.best - self.config.threshold {
            self.best = validation_loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.config.patience {
                self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
                self.bad_epochs = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_values() {
        let (l, g) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.5, 0.5]);
        let (l, _) = softmax_cross_entropy(&[30.0, -30.0], 0).unwrap();
        assert!(l < 1e-20);
        let (l, g) = softmax_cross_entropy(&[1000.0f64, -3.0, 2.5], 2).unwrap();
        assert!(l.is_finite());
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        assert!(softmax_cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![vec![1.0, -2.0]];
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![vec![1.0, -2.0]]);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        for g in [1e-3f64, 0.5, -7.0, 300.0] {
            let mut p = vec![vec![0.0f64]];
            let mut opt = Adam::new(AdamConfig::default(), &p);
            opt.step(&mut p, &[vec![g]]).unwrap();
            assert!((p[0][0].abs() - 1e-3).abs() < 1e-7, "g={g} step={}", p[0][0]);
            assert!(p[0][0].signum() == -g.signum());
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let start = vec![vec![0.3, 0.1, -0.2]];
        let grads = [vec![0.5, -1.0, 0.25]];
        let run = || {
            let mut p = start.clone();
            let mut opt = Adam::new(AdamConfig::default(), &p);
            opt.step(&mut p, &grads).unwrap();
            opt.step(&mut p, &grads).unwrap();
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn plateau_decreasing_losses_keep_lr() {
        let mut s = Plateau::new(PlateauConfig::default(), 1e-3);
        for e in 0..50 {
            assert_eq!(s.step(1.0 - e as f64 * 0.01), 1e-3);
        }
    }

    #[test]
    fn plateau_constant_loss_drops_at_epoch_six() {
        let mut s = Plateau::new(PlateauConfig::default(), 1e-3);
        let lrs: Vec<f64> = (0..6).map(|_| s.step(0.7)).collect();
        assert_eq!(&lrs[..5], &[1e-3; 5]);
        assert!((lrs[5] - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn plateau_floor() {
        let mut s = Plateau::new(PlateauConfig::default(), 1e-6);
        for _ in 0..20 {
            assert_eq!(s.step(1.0), 1e-6);
        }
    }

    #[test]
    fn small_improvement_does_not_count() {
        let mut s = Plateau::new(PlateauConfig::default(), 1e-3);
        s.step(1.0);
        for i in 1..=5 {
            s.step(1.0 - i as f64 * 1e-5);
        }
        assert!(s.lr < 1e-3);
    }
}

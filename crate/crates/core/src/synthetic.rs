//! Synthetic keystroke datasets with the benchmark's shape, for tests and demos.
//!
//! Each subject gets a base rhythm (hold times and keydown-keydown latencies);
//! samples multiply every base value by log-normal noise plus a small
//! per-session drift. Keyup-keydown latencies are derived as `DD - H`, so every
//! generated vector is internally consistent.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, KeystrokeSample};
use crate::features::{down_down_index, hold_index, up_down_index, TimingVector, N_FEATURES, N_KEYS};
use crate::seed;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub subjects: usize,
    pub sessions: u32,
    pub reps_per_session: u32,
    /// Log-scale standard deviation of per-sample noise.
    pub noise: f64,
    /// Log-scale standard deviation of per-session drift.
    pub session_drift: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            subjects: 51,
            sessions: 8,
            reps_per_session: 50,
            noise: 0.15,
            session_drift: 0.05,
            seed: 0,
        }
    }
}

pub fn subject_name(i: usize) -> String {
    format!("s{:03}", i + 1)
}

/// Base hold times and keydown-keydown latencies of one synthetic subject.
#[derive(Debug, Clone)]
pub struct Rhythm {
    pub hold: [f64; N_KEYS],
    pub down_down: [f64; N_KEYS - 1],
}

impl Rhythm {
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut hold = [0.0; N_KEYS];
        let mut down_down = [0.0; N_KEYS - 1];
        for h in hold.iter_mut() {
            *h = rng.random_range(0.05..0.16);
        }
        for (k, dd) in down_down.iter_mut().enumerate() {
            // The shifted 'R' after '5' is slower for everyone.
            let slow = if k == 4 || k == 5 { 0.25 } else { 0.0 };
            *dd = rng.random_range(0.10..0.40) + slow;
        }
        Self { hold, down_down }
    }

    /// One attempt, with every base value scaled by `exp(N(0, noise))` and `drift`.
    pub fn sample(&self, rng: &mut impl Rng, noise: f64, drift: &[f64; N_FEATURES]) -> TimingVector<f64> {
        let n = Normal::new(0.0, noise.max(0.0)).expect("valid normal");
        let mut v = [0.0; N_FEATURES];
        for k in 0..N_KEYS {
            let h = self.hold[k] * (n.sample(rng) + drift[hold_index(k)]).exp();
            v[hold_index(k)] = h;
            if k + 1 < N_KEYS {
                let dd = self.down_down[k] * (n.sample(rng) + drift[down_down_index(k)]).exp();
                v[down_down_index(k)] = dd;
                v[up_down_index(k)] = dd - h;
            }
        }
        TimingVector::new(v).expect("finite synthetic values")
    }
}

pub fn generate(config: &SyntheticConfig) -> Dataset<f64> {
    let mut samples = Vec::new();
    for s in 0..config.subjects {
        let name = subject_name(s);
        let mut rng = seed::rng(config.seed, &format!("synthetic/{name}"));
        let rhythm = Rhythm::random(&mut rng);
        let drift_dist = Normal::new(0.0, config.session_drift.max(0.0)).expect("valid normal");
        for session in 1..=config.sessions {
            let mut drift = [0.0; N_FEATURES];
            drift.iter_mut().for_each(|d| *d = drift_dist.sample(&mut rng));
            for rep in 1..=config.reps_per_session {
                let vector = rhythm.sample(&mut rng, config.noise, &drift);
                samples.push(KeystrokeSample::new(name.clone(), session, rep, vector).expect("valid indices"));
            }
        }
    }
    Dataset::new(samples)
}

//! Central finite-difference verification of the reverse-mode gradients.

use super::network::Network;
use super::train::{loss_and_gradients, Batch};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Finite-difference gradient of the summed softmax cross-entropy.
pub fn numeric_gradients(net: &Network<f64>, data: Batch<'_, f64>, h: f64) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut probe = net.clone();
    let mut out = net.zero_grads();
    for l in 0..out.len() {
        for j in 0..out[l].len() {
            let orig = probe.params()[l][j];
            probe.params_mut()[l][j] = orig + h;
            let (plus, _) = loss_and_gradients(&probe, data, &idx)?;
            probe.params_mut()[l][j] = orig - h;
            let (minus, _) = loss_and_gradients(&probe, data, &idx)?;
            probe.params_mut()[l][j] = orig;
            out[l][j] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(out)
}

pub fn analytic_gradients(net: &Network<f64>, data: Batch<'_, f64>) -> Result<Vec<Vec<f64>>> {
    let idx: Vec<usize> = (0..data.len()).collect();
    Ok(loss_and_gradients(net, data, &idx)?.1)
}

/// `max |a − b| / max(|a|, |b|, 1e-8)` over all entries.
pub fn max_relative_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .flatten()
        .zip(numeric.iter().flatten())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Maximum relative error between backpropagated and finite-difference
/// gradients on `data`.
pub fn gradient_check(net: &Network<f64>, data: Batch<'_, f64>) -> Result<f64> {
    let a = analytic_gradients(net, data)?;
    let n = numeric_gradients(net, data, FD_STEP)?;
    Ok(max_relative_error(&a, &n))
}

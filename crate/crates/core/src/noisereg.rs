//! Learnable-noise linear layers and the layer-wise noise-stability regularizer.
//!
//! The noisy layer computes `y = (μ_w + |σ_w| ⊙ ε_w)ᵀ x + μ_b + |σ_b| ⊙ ε_b`; the
//! perturbed weight is applied as an ordinary matrix-vector product. Noise is
//! supplied by the caller, zero (or absent) at evaluation time.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Stream;

/// `μ_w`, `σ_w` are `m×n`; `μ_b`, `σ_b` are `1×n`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyLinearParams {
    pub mu_w: Matrix,
    pub sigma_w: Matrix,
    pub mu_b: Matrix,
    pub sigma_b: Matrix,
}

impl NoisyLinearParams {
    pub fn check_shapes(&self) -> Result<()> {
        let (m, n) = self.mu_w.shape();
        if self.sigma_w.shape() != (m, n) || self.mu_b.shape() != (1, n) || self.sigma_b.shape() != (1, n) {
            return Err(Error::Shape(format!("noisy layer parameters are not {m}x{n} / 1x{n}")));
        }
        Ok(())
    }
}

pub fn noisy_linear_forward(x: &[f64], params: &NoisyLinearParams, eps_w: &Matrix, eps_b: &[f64]) -> Result<Vec<f64>> {
    params.check_shapes()?;
    let (m, n) = params.mu_w.shape();
    if x.len() != m || eps_w.shape() != (m, n) || eps_b.len() != n {
        return Err(Error::Shape(format!("noisy layer expects x of {m}, eps_w {m}x{n}, eps_b {n}")));
    }
    let mut y = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = params.mu_b.data()[j] + libm::fabs(params.sigma_b.data()[j]) * eps_b[j];
        for (i, xi) in x.iter().enumerate() {
            let w = params.mu_w.get(i, j) + libm::fabs(params.sigma_w.get(i, j)) * eps_w.get(i, j);
            acc += w * xi;
        }
        y.push(acc);
    }
    Ok(y)
}

/// `len` i.i.d. standard normal draws, rescaled so their Euclidean norm is at most `delta`.
pub fn sample_noise(len: usize, rng: &mut Stream, delta: f64) -> Vec<f64> {
    let mut eps: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let norm = libm::sqrt(eps.iter().map(|v| v * v).sum::<f64>());
    if norm > delta {
        let s = delta / norm;
        eps.iter_mut().for_each(|v| *v *= s);
    }
    eps
}

/// `Σ_{l ≥ k} λ_l · mean over real tokens of ‖clean_l − noisy_l‖²`.
///
/// Taps are indexed `[layer][batch row]`, each an `N×d` matrix; `layer_weights`
/// holds one weight per layer (zero for layers below `k`).
pub fn lnsr(clean: &[Vec<Matrix>], noisy: &[Vec<Matrix>], layer_weights: &[f64], pad_mask: &[Vec<bool>]) -> Result<f64> {
    if clean.len() != noisy.len() || clean.len() != layer_weights.len() {
        return Err(Error::Shape(format!(
            "tap lists disagree: {} clean, {} noisy, {} weights",
            clean.len(),
            noisy.len(),
            layer_weights.len()
        )));
    }
    let n_real = pad_mask.iter().flatten().filter(|r| **r).count();
    if n_real == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ((c_layer, n_layer), w) in clean.iter().zip(noisy).zip(layer_weights) {
        if *w == 0.0 {
            continue;
        }
        if c_layer.len() != n_layer.len() || c_layer.len() != pad_mask.len() {
            return Err(Error::Shape("tap batch sizes disagree".into()));
        }
        let mut sq = 0.0;
        for ((c, n), mask) in c_layer.iter().zip(n_layer).zip(pad_mask) {
            if c.shape() != n.shape() || c.rows() != mask.len() {
                return Err(Error::Shape("tap shapes disagree".into()));
            }
            for (r, real) in mask.iter().enumerate() {
                if *real {
                    sq += c.row(r).iter().zip(n.row(r)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                }
            }
        }
        total += w * sq / n_real as f64;
    }
    Ok(total)
}

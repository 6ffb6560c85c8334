//! Closed-form error bounds for regular assignments.

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoreticalBounds {
    /// `exp(-l mu^2 / 2)`.
    pub mv: f64,
    /// `None` below the spectral barrier `q^2 (l-1)(r-1) <= 1`.
    pub kos: Option<f64>,
}

/// Error bounds for majority vote and for the spectral/KOS analysis, where
/// `mu = E[2p-1]` and `q = E[(2p-1)^2]`.
pub fn theoretical_bounds(l: usize, r: usize, mu: f64, q: f64) -> Result<TheoreticalBounds> {
    if l == 0 || r == 0 {
        return Err(HarnessError::Config("l and r must be at least 1".into()));
    }
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(HarnessError::Config(format!("mu = {mu} outside (0, 1]")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(HarnessError::Config(format!("q = {q} outside [0, 1]")));
    }
    let (lf, l1, r1) = (l as f64, (l - 1) as f64, (r - 1) as f64);
    let mv = (-lf * mu * mu / 2.0).exp();
    let signal = q * q * l1 * r1;
    let kos = (signal > 1.0).then(|| (-(lf * q / 2.0) * (signal - 1.0) / (3.0 * signal + q * l1)).exp());
    Ok(TheoreticalBounds { mv, kos })
}

/// Bound on the probability that the depth-`2k` neighborhood of a task is
/// not a tree: `(3 l r / n) ((l-1)(r-1))^(2k)`, clamped to 1.
pub fn tree_probability_bound(n: usize, l: usize, r: usize, k: usize) -> Result<f64> {
    if n == 0 || l == 0 || r == 0 || k == 0 {
        return Err(HarnessError::Config("n, l, r and k must be at least 1".into()));
    }
    let growth = ((l - 1) * (r - 1)) as f64;
    let p = 3.0 * (l * r) as f64 / n as f64 * growth.powf(2.0 * k as f64);
    Ok(p.min(1.0))
}

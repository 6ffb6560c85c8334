use crowdbp::{EstimateReport, Label};
use serde::Serialize;

use crate::error::Result;

/// Fraction of tasks whose estimate differs from the truth.
pub fn error_rate(estimates: &EstimateReport, truth: &[Label]) -> Result<f64> {
    if estimates.labels.len() != truth.len() {
        return Err(crowdbp::Error::Dimension {
            what: "truth labels",
            expected: estimates.labels.len(),
            found: truth.len(),
        }
        .into());
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let wrong = estimates.labels.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// One line of the metrics table. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub estimator: String,
    pub l: usize,
    pub r: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub trials: usize,
    pub mean_iterations: f64,
    pub wall_time_ms: f64,
    pub failures: usize,
}

/// Sample mean and standard error `s / sqrt(n)`; zero error for n < 2.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Standard error of the mean of paired differences `a_t - b_t`.
pub fn paired_std_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_and_std_error(&d).1
}

//! Monte Carlo sweeps over regular assignments.

use std::io::Write;
use std::time::Instant;

use crowdbp::graph::{generate_regular_bipartite, sample_answers, sample_ground_truth};
use crowdbp::rng::{derive_seed, stage};
use crowdbp::{EstimatorSpec, ReliabilityPrior, SideInfo};
use rayon::prelude::*;

use crate::bounds::{theoretical_bounds, tree_probability_bound};
use crate::config::{feasible_task_count, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::{error_rate, mean_and_std_error, MetricsRow};

/// Result of one estimator on one trial; `None` when it failed.
type Outcome = Option<(f64, usize, f64)>;

/// Runs every estimator on `trials` random instances per sweep point and
/// returns one row per `(estimator, point)` followed by the bound rows.
///
/// Each trial draws its graph, truth and answers from seeds derived from
/// `(seed, point index, trial index)`, and aggregation runs in trial order,
/// so the rows do not depend on the number of threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let prior = config.parsed_prior()?;
    let estimators = config.parsed_estimators()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| HarnessError::Config(e.to_string()))?;

    let mut rows = Vec::new();
    for (point, (l, r)) in config.points().into_iter().enumerate() {
        let n = feasible_task_count(config.n_tasks, l, r);
        if n != config.n_tasks {
            log::warn!("l = {l}, r = {r}: using {n} tasks instead of {} so that n l is divisible by r", config.n_tasks);
        }
        log::info!("sweep point l = {l}, r = {r}, n = {n}");
        let outcomes: Vec<Vec<Outcome>> = pool.install(|| {
            (0..config.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = derive_seed(config.seed, &[point as u64, trial as u64]);
                    run_trial(n, l, r, &prior, &estimators, seed, config.timing)
                })
                .collect()
        });
        for (k, spec) in estimators.iter().enumerate() {
            let done: Vec<(f64, usize, f64)> = outcomes.iter().filter_map(|o| o[k]).collect();
            let errors: Vec<f64> = done.iter().map(|d| d.0).collect();
            let (mean_error, std_error) = mean_and_std_error(&errors);
            let count = done.len().max(1) as f64;
            rows.push(MetricsRow {
                estimator: spec.to_string(),
                l,
                r,
                mean_error,
                std_error,
                trials: done.len(),
                mean_iterations: done.iter().map(|d| d.1 as f64).sum::<f64>() / count,
                wall_time_ms: done.iter().map(|d| d.2).sum::<f64>() / count,
                failures: config.trials - done.len(),
            });
        }
        rows.extend(bound_rows(&prior, n, l, r, config.tree_depth));
    }
    Ok(rows)
}

fn run_trial(
    n: usize,
    l: usize,
    r: usize,
    prior: &ReliabilityPrior,
    estimators: &[EstimatorSpec],
    seed: u64,
    timing: bool,
) -> Vec<Outcome> {
    let instance = generate_regular_bipartite(n, l, r, derive_seed(seed, &[stage::GRAPH])).and_then(|g| {
        let truth = sample_ground_truth(&g, prior, derive_seed(seed, &[stage::TRUTH]));
        let answers = sample_answers(&g, &truth, derive_seed(seed, &[stage::ANSWERS]))?;
        Ok((g, truth, answers))
    });
    let (graph, truth, answers) = match instance {
        Ok(x) => x,
        Err(e) => {
            log::warn!("instance generation failed: {e}");
            return vec![None; estimators.len()];
        }
    };
    estimators
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let side = SideInfo {
                prior: Some(prior),
                truth: Some(&truth.labels),
                reliabilities: Some(&truth.reliabilities),
                seed: derive_seed(seed, &[stage::ESTIMATOR, k as u64]),
            };
            let start = timing.then(Instant::now);
            match spec.run(&graph, &answers, &side) {
                Ok(report) => {
                    let ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
                    let err = error_rate(&report, &truth.labels).ok()?;
                    Some((err, report.iterations_run, ms))
                }
                Err(e) => {
                    log::warn!("{spec} failed: {e}");
                    None
                }
            }
        })
        .collect()
}

fn bound_rows(prior: &ReliabilityPrior, n: usize, l: usize, r: usize, depth: usize) -> Vec<MetricsRow> {
    let row = |name: &str, value: f64| MetricsRow {
        estimator: name.to_owned(),
        l,
        r,
        mean_error: value,
        std_error: 0.0,
        trials: 0,
        mean_iterations: 0.0,
        wall_time_ms: 0.0,
        failures: 0,
    };
    let (mu, q) = prior.moments();
    let mut rows = Vec::new();
    if let Ok(b) = theoretical_bounds(l, r, mu, q) {
        rows.push(row("bound-mv", b.mv));
        if let Some(kos) = b.kos {
            rows.push(row("bound-kos", kos));
        }
    }
    if let Ok(p) = tree_probability_bound(n, l, r, depth) {
        rows.push(row("bound-not-tree", p));
    }
    rows
}

/// Writes rows as CSV with a header line.
pub fn write_metrics(rows: &[MetricsRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

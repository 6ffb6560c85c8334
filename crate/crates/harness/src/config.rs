//! Experiment configuration, read from TOML.
//!
//! ```toml
//! n_tasks = 1000
//! sweep = "l"
//! values = [2, 3, 5, 10, 15, 20]
//! fixed_degree = 5
//! prior = "sh"
//! estimators = ["mv", "kos", "bp"]
//! trials = 100
//! seed = 7
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crowdbp::{BpOptions, EstimatorSpec, ReliabilityPrior};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    /// Vary the task degree l; `fixed_degree` is r.
    L,
    /// Vary the worker degree r; `fixed_degree` is l.
    R,
}

fn default_trials() -> usize {
    100
}
fn default_k_max() -> usize {
    100
}
fn default_tol() -> f64 {
    1e-5
}
fn default_tree_depth() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_tasks: usize,
    pub sweep: SweepVariable,
    pub values: Vec<usize>,
    pub fixed_degree: usize,
    pub prior: String,
    pub estimators: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Record wall-clock time per estimator. Off by default so that the CSV
    /// is reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
    /// Depth `k` used for the companion tree-probability row.
    #[serde(default = "default_tree_depth")]
    pub tree_depth: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(HarnessError::Config(msg.into()));
        if self.values.is_empty() {
            return fail("the sweep needs at least one value");
        }
        if self.values.contains(&0) || self.fixed_degree == 0 {
            return fail("degrees must be at least 1");
        }
        if self.n_tasks == 0 {
            return fail("n_tasks must be at least 1");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.estimators.is_empty() {
            return fail("at least one estimator is required");
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1");
        }
        if self.tree_depth == 0 {
            return fail("tree_depth must be at least 1");
        }
        self.bp_options().validate()?;
        self.parsed_prior()?;
        self.parsed_estimators()?;
        Ok(())
    }

    pub fn parsed_prior(&self) -> Result<ReliabilityPrior> {
        Ok(ReliabilityPrior::from_str(&self.prior)?)
    }

    pub fn parsed_estimators(&self) -> Result<Vec<EstimatorSpec>> {
        self.estimators
            .iter()
            .map(|name| Ok(EstimatorSpec::from_str(name)?.with_iterations(self.k_max, self.tol)))
            .collect()
    }

    pub fn bp_options(&self) -> BpOptions {
        BpOptions::new(self.k_max, self.tol)
    }

    /// `(l, r)` of every sweep point.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.values
            .iter()
            .map(|&v| match self.sweep {
                SweepVariable::L => (v, self.fixed_degree),
                SweepVariable::R => (self.fixed_degree, v),
            })
            .collect()
    }
}

/// The task count closest to `n` (ties to the smaller) for which an
/// `(l, r)`-regular graph exists, i.e. `n l` is divisible by `r` and there
/// are at least `l` workers and `r` tasks.
pub fn feasible_task_count(n: usize, l: usize, r: usize) -> usize {
    let ok = |m: usize| m >= r && (m * l).is_multiple_of(r) && m * l / r >= l;
    (0..)
        .flat_map(|d| [n.checked_sub(d), n.checked_add(d)])
        .flatten()
        .find(|&m| m > 0 && ok(m))
        .expect("multiples of r are always feasible")
}

//! Sum-product belief propagation on the task/worker factor graph.
//!
//! Messages are normalized `(m(+1), m(-1))` pairs. One iteration is a
//! synchronous sweep: every task-to-worker message is recomputed from the
//! previous worker-to-task messages, then every worker-to-task message from
//! the fresh task-to-worker messages. Beliefs are formed once at the end.

mod kernel;

pub use kernel::{Kernel, NAIVE_MAX_DEGREE};
pub(crate) use kernel::{order_free_sum, task_outgoing, worker_outgoing, worker_outgoing_slots, Scratch};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{AnswerMatrix, AssignmentGraph, Label};
use crate::math::{exp, ln, tanh};
use crate::prior::{ReliabilityPrior, WorkerFactor};

/// Smallest value a message component may take before normalization.
pub const MESSAGE_FLOOR: f64 = 1e-300;

/// A normalized distribution over one binary label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair {
    pub pos: f64,
    pub neg: f64,
}

impl Pair {
    pub const UNIFORM: Pair = Pair { pos: 0.5, neg: 0.5 };

    pub const fn point(label: Label) -> Self {
        match label {
            Label::Pos => Pair { pos: 1.0, neg: 0.0 },
            Label::Neg => Pair { pos: 0.0, neg: 1.0 },
        }
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Pos => self.pos,
            Label::Neg => self.neg,
        }
    }

    /// `m(+1) - m(-1)`.
    pub fn magnetization(&self) -> f64 {
        self.pos - self.neg
    }

    /// `ln m(+1) - ln m(-1)`.
    pub fn llr(&self) -> f64 {
        ln(self.pos) - ln(self.neg)
    }

    fn floored(pos: f64, neg: f64) -> Self {
        let pos = pos.max(MESSAGE_FLOOR);
        let neg = neg.max(MESSAGE_FLOOR);
        let total = pos + neg;
        Pair {
            pos: pos / total,
            neg: neg / total,
        }
    }

    pub(crate) fn from_llr(llr: f64) -> Self {
        let e = exp(-llr.abs());
        let (big, small) = (1.0 / (1.0 + e), e / (1.0 + e));
        if llr >= 0.0 {
            Self::floored(big, small)
        } else {
            Self::floored(small, big)
        }
    }

    /// `None` when both weights are zero.
    pub(crate) fn from_logs(log_pos: f64, log_neg: f64) -> Option<Self> {
        let top = log_pos.max(log_neg);
        if top == f64::NEG_INFINITY || top.is_nan() {
            return None;
        }
        Some(Self::floored(exp(log_pos - top), exp(log_neg - top)))
    }

    /// Normalizes nonnegative weights; `None` when both are zero.
    pub fn from_weights(pos: f64, neg: f64) -> Option<Self> {
        if !(pos + neg > 0.0) {
            return None;
        }
        Some(Self::floored(pos, neg))
    }

    fn max_abs_diff(&self, other: &Pair) -> f64 {
        (self.pos - other.pos).abs().max((self.neg - other.neg).abs())
    }
}

/// Per-task decoded labels and margins with run metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub labels: Vec<Label>,
    /// `b(+1) - b(-1)`, or a normalized score for non-Bayesian estimators.
    pub margins: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub max_delta: f64,
}

impl EstimateReport {
    /// Labels follow the sign of each margin with ties going to `+1`.
    pub fn from_margins(margins: Vec<f64>, iterations_run: usize, converged: bool, max_delta: f64) -> Self {
        Self {
            labels: margins.iter().map(|&m| Label::from_score(m)).collect(),
            margins,
            iterations_run,
            converged,
            max_delta,
        }
    }

    /// A one-shot estimator: no iterations, trivially converged.
    pub fn direct(margins: Vec<f64>) -> Self {
        Self::from_margins(margins, 0, true, 0.0)
    }
}

/// Iteration budget, stopping tolerance and worker kernel for [`run_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpOptions {
    pub k_max: usize,
    pub tol: f64,
    pub kernel: Kernel,
}

impl Default for BpOptions {
    fn default() -> Self {
        Self {
            k_max: 100,
            tol: 1e-5,
            kernel: Kernel::Auto,
        }
    }
}

impl BpOptions {
    pub fn new(k_max: usize, tol: f64) -> Self {
        Self {
            k_max,
            tol,
            kernel: Kernel::Auto,
        }
    }

    /// Exactly `ceil(ln ln n)` iterations (at least one) and no early stop.
    pub fn theory(n_tasks: usize) -> Self {
        let n = (n_tasks as f64).max(3.0);
        let k = libm::ceil(ln(ln(n))).max(1.0) as usize;
        Self::new(k, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::param("k_max must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Messages in both directions (indexed by edge) and per-task beliefs.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState {
    task_to_worker: Vec<Pair>,
    worker_to_task: Vec<Pair>,
    beliefs: Vec<Pair>,
    belief_llrs: Vec<f64>,
    iteration: usize,
}

impl BeliefState {
    /// All messages and beliefs start at `(1/2, 1/2)`.
    pub fn new(graph: &AssignmentGraph) -> Self {
        Self {
            task_to_worker: vec![Pair::UNIFORM; graph.n_edges()],
            worker_to_task: vec![Pair::UNIFORM; graph.n_edges()],
            beliefs: vec![Pair::UNIFORM; graph.n_tasks()],
            belief_llrs: vec![0.0; graph.n_tasks()],
            iteration: 0,
        }
    }

    pub fn task_to_worker(&self) -> &[Pair] {
        &self.task_to_worker
    }

    pub fn worker_to_task(&self) -> &[Pair] {
        &self.worker_to_task
    }

    pub fn beliefs(&self) -> &[Pair] {
        &self.beliefs
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Overwrites the worker-to-task message on edge `e`.
    pub fn set_worker_to_task(&mut self, e: usize, m: Pair) {
        self.worker_to_task[e] = m;
    }

    fn check(&self, graph: &AssignmentGraph) -> Result<()> {
        Error::check_len("messages", graph.n_edges(), self.task_to_worker.len())?;
        Error::check_len("beliefs", graph.n_tasks(), self.beliefs.len())
    }

    /// Task-to-worker sweep: product of the other incoming worker messages.
    /// Returns the largest component change.
    pub fn update_task_messages(&mut self, graph: &AssignmentGraph) -> Result<f64> {
        self.check(graph)?;
        let mut llrs = Vec::new();
        let mut out = Vec::new();
        let mut suffix = Vec::new();
        let mut delta: f64 = 0.0;
        for i in 0..graph.n_tasks() {
            let edges = graph.task_edges(i);
            llrs.clear();
            llrs.extend(edges.iter().map(|&e| self.worker_to_task[e].llr()));
            out.clear();
            out.resize(edges.len(), Pair::UNIFORM);
            task_outgoing(&llrs, &mut out, &mut suffix);
            for (&e, m) in edges.iter().zip(&out) {
                if m.pos.is_nan() || m.neg.is_nan() {
                    return Err(Error::NumericDegeneracy {
                        edge: e,
                        reason: "task-to-worker message is not a number",
                    });
                }
                delta = delta.max(m.max_abs_diff(&self.task_to_worker[e]));
                self.task_to_worker[e] = *m;
            }
        }
        Ok(delta)
    }

    /// Worker-to-task sweep. Returns the largest component change.
    pub fn update_worker_messages(
        &mut self,
        graph: &AssignmentGraph,
        answers: &AnswerMatrix,
        factor: &WorkerFactor,
        kernel: Kernel,
    ) -> Result<f64> {
        self.check(graph)?;
        Error::check_len("answers", graph.n_edges(), answers.len())?;
        if graph.max_worker_degree() > factor.table().r_max() {
            return Err(Error::param("factor table does not cover the largest worker degree"));
        }
        let kernel = kernel.resolve(factor)?;
        if kernel == Kernel::Naive && graph.max_worker_degree() > NAIVE_MAX_DEGREE {
            return Err(Error::TooLarge {
                what: "worker degree for the naive kernel",
                size: graph.max_worker_degree(),
                limit: NAIVE_MAX_DEGREE,
            });
        }
        let mut scratch = Scratch::default();
        let mut local_answers = Vec::new();
        let mut incoming = Vec::new();
        let mut out = Vec::new();
        let mut delta: f64 = 0.0;
        for u in 0..graph.n_workers() {
            let edges = graph.worker_edges(u);
            local_answers.clear();
            local_answers.extend(edges.iter().map(|&e| answers.get(e)));
            incoming.clear();
            incoming.extend(edges.iter().map(|&e| self.task_to_worker[e]));
            out.clear();
            out.resize(edges.len(), Pair::UNIFORM);
            worker_outgoing(kernel, factor, &local_answers, &incoming, &mut out, &mut scratch).map_err(|k| {
                Error::NumericDegeneracy {
                    edge: edges[k],
                    reason: "worker-to-task message has zero total weight",
                }
            })?;
            for (&e, m) in edges.iter().zip(&out) {
                delta = delta.max(m.max_abs_diff(&self.worker_to_task[e]));
                self.worker_to_task[e] = *m;
            }
        }
        Ok(delta)
    }

    /// Beliefs from all incoming worker-to-task messages.
    pub fn compute_beliefs(&mut self, graph: &AssignmentGraph) -> Result<()> {
        self.check(graph)?;
        let mut buf = Vec::new();
        for i in 0..graph.n_tasks() {
            let llr = order_free_sum(graph.task_edges(i).iter().map(|&e| self.worker_to_task[e].llr()), &mut buf);
            if llr.is_nan() {
                return Err(Error::NumericDegeneracy {
                    edge: graph.task_edges(i).first().copied().unwrap_or(0),
                    reason: "belief has zero total weight",
                });
            }
            self.belief_llrs[i] = llr;
            self.beliefs[i] = Pair::from_llr(llr);
        }
        Ok(())
    }

    /// Per-task `b(+1) - b(-1)`.
    pub fn margins(&self) -> Vec<f64> {
        self.belief_llrs.iter().map(|&l| tanh(l / 2.0)).collect()
    }
}

/// All outgoing messages of a single worker with the given answers and
/// incoming task-to-worker messages, evaluated with `kernel`.
pub fn worker_messages(
    kernel: Kernel,
    factor: &WorkerFactor,
    answers: &[Label],
    incoming: &[Pair],
) -> Result<Vec<Pair>> {
    Error::check_len("incoming messages", answers.len(), incoming.len())?;
    let kernel = kernel.resolve(factor)?;
    if kernel == Kernel::Naive && answers.len() > NAIVE_MAX_DEGREE {
        return Err(Error::TooLarge {
            what: "worker degree",
            size: answers.len(),
            limit: NAIVE_MAX_DEGREE,
        });
    }
    if answers.len() > factor.table().r_max() {
        return Err(Error::TooLarge {
            what: "worker degree",
            size: answers.len(),
            limit: factor.table().r_max(),
        });
    }
    let mut out = vec![Pair::UNIFORM; answers.len()];
    worker_outgoing(kernel, factor, answers, incoming, &mut out, &mut Scratch::default()).map_err(|k| {
        Error::NumericDegeneracy {
            edge: k,
            reason: "worker-to-task message has zero total weight",
        }
    })?;
    Ok(out)
}

/// Runs BP with the default kernel and decodes the beliefs.
pub fn bp_run(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    prior: &ReliabilityPrior,
    k_max: usize,
    tol: f64,
) -> Result<EstimateReport> {
    let factor = WorkerFactor::new(prior, graph.max_worker_degree());
    run_with(graph, answers, &factor, &BpOptions::new(k_max, tol))
}

/// Iterates full sweeps until the largest message change drops below
/// `tol` or `k_max` sweeps have run, then decodes.
pub fn run_with(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    factor: &WorkerFactor,
    options: &BpOptions,
) -> Result<EstimateReport> {
    Ok(run_to_state(graph, answers, factor, options)?.1)
}

/// Like [`run_with`] but also returns the final message state.
pub fn run_to_state(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    factor: &WorkerFactor,
    options: &BpOptions,
) -> Result<(BeliefState, EstimateReport)> {
    options.validate()?;
    let mut state = BeliefState::new(graph);
    let mut converged = false;
    let mut max_delta = f64::INFINITY;
    for _ in 0..options.k_max {
        let dt = state.update_task_messages(graph)?;
        let dw = state.update_worker_messages(graph, answers, factor, options.kernel)?;
        state.iteration += 1;
        max_delta = dt.max(dw);
        if max_delta < options.tol {
            converged = true;
            break;
        }
    }
    state.compute_beliefs(graph)?;
    let report = EstimateReport::from_margins(state.margins(), state.iteration, converged, max_delta);
    Ok((state, report))
}

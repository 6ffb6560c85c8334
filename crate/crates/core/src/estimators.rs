//! Baseline and derived label estimators sharing the [`EstimateReport`]
//! output type.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bp::{self, BpOptions, EstimateReport};
use crate::error::{Error, Result};
use crate::graph::{AnswerMatrix, AssignmentGraph, Label};
use crate::math::{ln, tanh};
use crate::oracle;
use crate::prior::{ReliabilityPrior, WorkerFactor};
use crate::rng::rng_from_seed;

/// Reliabilities used as weights are kept inside `[CLAMP, 1 - CLAMP]`.
pub const RELIABILITY_CLAMP: f64 = 1e-9;

fn clamp_reliability(p: f64) -> f64 {
    p.clamp(RELIABILITY_CLAMP, 1.0 - RELIABILITY_CLAMP)
}

/// Sign of the answer sum per task; margin is the sum over the degree.
pub fn majority_vote(graph: &AssignmentGraph, answers: &AnswerMatrix) -> EstimateReport {
    let margins = (0..graph.n_tasks())
        .map(|i| {
            let edges = graph.task_edges(i);
            if edges.is_empty() {
                return 0.0;
            }
            let votes: f64 = edges.iter().map(|&e| answers.get(e).sign()).sum();
            votes / edges.len() as f64
        })
        .collect();
    EstimateReport::direct(margins)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KosInit {
    /// i.i.d. N(1, 1) worker messages.
    #[default]
    RandomNormal,
    /// All worker messages start at 1.
    Ones,
}

/// Iterative linear message passing of Karger, Oh and Shah.
///
/// Task messages `x_{i->u} = sum_{v in M_i \ u} A_iv y_{v->i}`, worker messages
/// `y_{u->i} = sum_{j in N_u \ i} A_ju x_{j->u}`, and the decision is the sign
/// of `sum_u A_iu y_{u->i}`. The worker messages are rescaled to unit RMS after
/// each sweep, which leaves the decisions unchanged; convergence is tested on
/// the rescaled messages.
pub fn kos_run(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    k_max: usize,
    tol: f64,
    seed: u64,
    init: KosInit,
) -> Result<EstimateReport> {
    if k_max == 0 {
        return Err(Error::param("k_max must be at least 1"));
    }
    Error::check_len("answers", graph.n_edges(), answers.len())?;
    let a = |e: usize| answers.get(e).sign();
    let mut y: Vec<f64> = match init {
        KosInit::Ones => vec![1.0; graph.n_edges()],
        KosInit::RandomNormal => {
            let mut rng = rng_from_seed(seed);
            (0..graph.n_edges())
                .map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
    };
    rescale(&mut y);
    let mut x = vec![0.0; graph.n_edges()];
    let mut next = vec![0.0; graph.n_edges()];
    let mut iterations = 0;
    let mut converged = false;
    let mut max_delta = f64::INFINITY;
    for _ in 0..k_max {
        for i in 0..graph.n_tasks() {
            let edges = graph.task_edges(i);
            let total: f64 = edges.iter().map(|&e| a(e) * y[e]).sum();
            for &e in edges {
                x[e] = total - a(e) * y[e];
            }
        }
        for u in 0..graph.n_workers() {
            let edges = graph.worker_edges(u);
            let total: f64 = edges.iter().map(|&e| a(e) * x[e]).sum();
            for &e in edges {
                next[e] = total - a(e) * x[e];
            }
        }
        rescale(&mut next);
        max_delta = next.iter().zip(&y).map(|(n, o)| (n - o).abs()).fold(0.0, f64::max);
        core::mem::swap(&mut y, &mut next);
        iterations += 1;
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    let scores: Vec<f64> = (0..graph.n_tasks())
        .map(|i| graph.task_edges(i).iter().map(|&e| a(e) * y[e]).sum())
        .collect();
    let scale = scores.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let margins = if scale > 0.0 {
        scores.iter().map(|s| s / scale).collect()
    } else {
        scores
    };
    Ok(EstimateReport::from_margins(margins, iterations, converged, max_delta))
}

fn rescale(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let rms = libm::sqrt(v.iter().map(|t| t * t).sum::<f64>() / v.len() as f64);
    if rms > 0.0 && rms.is_finite() {
        v.iter_mut().for_each(|t| *t /= rms);
    }
}

/// Add-one smoothed fraction of each worker's answers that agree with `labels`.
pub fn smoothed_reliabilities(graph: &AssignmentGraph, answers: &AnswerMatrix, labels: &[Label]) -> Vec<f64> {
    (0..graph.n_workers())
        .map(|u| {
            let edges = graph.worker_edges(u);
            let matches = edges.iter().filter(|&&e| answers.get(e) == labels[graph.edge(e).0]).count();
            (1 + matches) as f64 / (2 + edges.len()) as f64
        })
        .collect()
}

/// Estimation plus belief propagation: start from majority vote, then each
/// round fits an empirical prior to smoothed per-worker agreement rates and
/// reruns BP under it.
pub fn ebp_run(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    rounds: usize,
    options: &BpOptions,
) -> Result<EstimateReport> {
    if rounds == 0 {
        return Err(Error::param("EBP needs at least one round"));
    }
    let mut report = majority_vote(graph, answers);
    for _ in 0..rounds {
        let estimates = smoothed_reliabilities(graph, answers, &report.labels);
        let prior = ReliabilityPrior::empirical(&estimates)?;
        let factor = WorkerFactor::new(&prior, graph.max_worker_degree());
        report = bp::run_with(graph, answers, &factor, options)?;
    }
    Ok(report)
}

/// Log-odds weighted vote with known worker reliabilities.
pub fn oracle_work(graph: &AssignmentGraph, answers: &AnswerMatrix, reliabilities: &[f64]) -> Result<EstimateReport> {
    Error::check_len("worker reliabilities", graph.n_workers(), reliabilities.len())?;
    let clamped = reliabilities.iter().filter(|&&p| p <= 0.0 || p >= 1.0).count();
    if clamped > 0 {
        log::warn!("{clamped} worker reliabilities at 0 or 1 clamped to [{RELIABILITY_CLAMP}, 1 - {RELIABILITY_CLAMP}]");
    }
    let weights: Vec<f64> = reliabilities
        .iter()
        .map(|&p| {
            let p = clamp_reliability(p);
            ln(p / (1.0 - p))
        })
        .collect();
    let margins = (0..graph.n_tasks())
        .map(|i| {
            let score: f64 = graph
                .task_edges(i)
                .iter()
                .map(|&e| answers.get(e).sign() * weights[graph.edge(e).1])
                .sum();
            tanh(score / 2.0)
        })
        .collect();
    Ok(EstimateReport::direct(margins))
}

/// Maximum a posteriori reliability of every worker under Beta(alpha, beta)
/// given soft labels `w_i = P(s_i = +1)`.
pub(crate) fn em_m_step(graph: &AssignmentGraph, answers: &AnswerMatrix, w: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
    (0..graph.n_workers())
        .map(|u| {
            let edges = graph.worker_edges(u);
            let agree: f64 = edges
                .iter()
                .map(|&e| {
                    let wi = w[graph.edge(e).0];
                    match answers.get(e) {
                        Label::Pos => wi,
                        Label::Neg => 1.0 - wi,
                    }
                })
                .sum();
            let denom = alpha + beta - 2.0 + edges.len() as f64;
            if denom <= 0.0 {
                return 0.5;
            }
            clamp_reliability((alpha - 1.0 + agree) / denom)
        })
        .collect()
}

/// One-coin Dawid-Skene EM with a Beta(alpha, beta) prior on reliabilities.
pub fn em_run(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    alpha: f64,
    beta: f64,
    k_max: usize,
    tol: f64,
) -> Result<EstimateReport> {
    ReliabilityPrior::beta(alpha, beta)?;
    if k_max == 0 {
        return Err(Error::param("k_max must be at least 1"));
    }
    Error::check_len("answers", graph.n_edges(), answers.len())?;
    // soft majority vote: fraction of +1 answers
    let mut w: Vec<f64> = (0..graph.n_tasks())
        .map(|i| {
            let edges = graph.task_edges(i);
            if edges.is_empty() {
                0.5
            } else {
                edges.iter().filter(|&&e| answers.get(e) == Label::Pos).count() as f64 / edges.len() as f64
            }
        })
        .collect();
    let mut margins = vec![0.0; graph.n_tasks()];
    let mut iterations = 0;
    let mut converged = false;
    let mut max_delta = f64::INFINITY;
    for _ in 0..k_max {
        let p = em_m_step(graph, answers, &w, alpha, beta);
        let log_odds: Vec<f64> = p.iter().map(|&p| ln(p / (1.0 - p))).collect();
        max_delta = 0.0;
        for i in 0..graph.n_tasks() {
            let score: f64 = graph
                .task_edges(i)
                .iter()
                .map(|&e| answers.get(e).sign() * log_odds[graph.edge(e).1])
                .sum();
            margins[i] = tanh(score / 2.0);
            let wi = (1.0 + margins[i]) / 2.0;
            max_delta = max_delta.max((wi - w[i]).abs());
            w[i] = wi;
        }
        iterations += 1;
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    Ok(EstimateReport::from_margins(margins, iterations, converged, max_delta))
}

/// Which estimator to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorKind {
    MajorityVote,
    Kos,
    BpTrue,
    Ebp,
    OracleWork,
    OracleTask,
    Em,
}

/// An estimator with its parameters; parsed from the CLI names
/// `mv | kos | bp | ebp1 | ebp2 | oracle-work | oracle-task | em`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// EBP rounds.
    pub rounds: usize,
    pub bp: BpOptions,
    pub kos_init: KosInit,
    /// Beta prior handed to EM.
    pub em_prior: (f64, f64),
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            rounds: 1,
            bp: BpOptions::default(),
            kos_init: KosInit::RandomNormal,
            em_prior: (2.0, 1.0),
        }
    }

    pub fn ebp(rounds: usize) -> Result<Self> {
        if rounds == 0 {
            return Err(Error::param("EBP needs at least one round"));
        }
        Ok(Self {
            rounds,
            ..Self::new(EstimatorKind::Ebp)
        })
    }

    pub fn with_iterations(mut self, k_max: usize, tol: f64) -> Self {
        self.bp.k_max = k_max;
        self.bp.tol = tol;
        self
    }

    /// True when the estimator reads the reliability prior.
    pub fn needs_prior(&self) -> bool {
        matches!(self.kind, EstimatorKind::BpTrue | EstimatorKind::OracleTask)
    }

    pub fn run(&self, graph: &AssignmentGraph, answers: &AnswerMatrix, side: &SideInfo<'_>) -> Result<EstimateReport> {
        let prior = || side.prior.ok_or(Error::Missing("reliability prior"));
        let BpOptions { k_max, tol, .. } = self.bp;
        match self.kind {
            EstimatorKind::MajorityVote => {
                Error::check_len("answers", graph.n_edges(), answers.len())?;
                Ok(majority_vote(graph, answers))
            }
            EstimatorKind::Kos => kos_run(graph, answers, k_max, tol, side.seed, self.kos_init),
            EstimatorKind::BpTrue => {
                let factor = WorkerFactor::new(prior()?, graph.max_worker_degree());
                bp::run_with(graph, answers, &factor, &self.bp)
            }
            EstimatorKind::Ebp => ebp_run(graph, answers, self.rounds, &self.bp),
            EstimatorKind::OracleWork => {
                let p = side.reliabilities.ok_or(Error::Missing("true worker reliabilities"))?;
                oracle_work(graph, answers, p)
            }
            EstimatorKind::OracleTask => {
                let truth = side.truth.ok_or(Error::Missing("true task labels"))?;
                oracle::oracle_task_estimate(graph, answers, prior()?, truth)
            }
            EstimatorKind::Em => em_run(graph, answers, self.em_prior.0, self.em_prior.1, k_max, tol),
        }
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EstimatorKind::MajorityVote => f.write_str("mv"),
            EstimatorKind::Kos => f.write_str("kos"),
            EstimatorKind::BpTrue => f.write_str("bp"),
            EstimatorKind::Ebp => write!(f, "ebp{}", self.rounds),
            EstimatorKind::OracleWork => f.write_str("oracle-work"),
            EstimatorKind::OracleTask => f.write_str("oracle-task"),
            EstimatorKind::Em => f.write_str("em"),
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.trim() {
            "mv" => EstimatorKind::MajorityVote,
            "kos" => EstimatorKind::Kos,
            "bp" | "bp-true" => EstimatorKind::BpTrue,
            "oracle-work" => EstimatorKind::OracleWork,
            "oracle-task" => EstimatorKind::OracleTask,
            "em" => EstimatorKind::Em,
            other => {
                let rounds = other
                    .strip_prefix("ebp")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::Parameter(format!(
                            "unknown estimator {other:?}; expected mv, kos, bp, ebp1, ebp2, oracle-work, oracle-task or em"
                        ))
                    })?;
                return Self::ebp(rounds);
            }
        };
        Ok(Self::new(kind))
    }
}

/// Inputs beyond the answers that some estimators need.
#[derive(Clone, Copy, Debug, Default)]
pub struct SideInfo<'a> {
    pub prior: Option<&'a ReliabilityPrior>,
    pub truth: Option<&'a [Label]>,
    pub reliabilities: Option<&'a [f64]>,
    /// Seed for randomized estimators (KOS initialization).
    pub seed: u64,
}

/// Canonical name list, handy for help texts.
pub fn estimator_names() -> Vec<String> {
    ["mv", "kos", "bp", "ebp1", "ebp2", "oracle-work", "oracle-task", "em"]
        .iter()
        .map(|s| String::from(*s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Label::{Neg, Pos};
    use alloc::string::ToString;

    fn answers_of(graph: &AssignmentGraph, a: &[Label]) -> AnswerMatrix {
        AnswerMatrix::new(graph, a.to_vec()).unwrap()
    }

    fn star(n_workers: usize) -> AssignmentGraph {
        AssignmentGraph::from_edges(1, n_workers, (0..n_workers).map(|u| (0, u)).collect()).unwrap()
    }

    #[test]
    fn majority_vote_basics() {
        let g = star(3);
        let r = majority_vote(&g, &answers_of(&g, &[Pos, Pos, Neg]));
        assert_eq!(r.labels, vec![Pos]);
        assert!((r.margins[0] - 1.0 / 3.0).abs() < 1e-15);
        let g = star(2);
        let r = majority_vote(&g, &answers_of(&g, &[Pos, Neg]));
        assert_eq!(r.labels, vec![Pos]);
        assert_eq!(r.margins[0], 0.0);
    }

    #[test]
    fn kos_hand_cases() {
        let g = crate::graph::AssignmentGraph::from_edges(2, 2, vec![(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let all_pos = answers_of(&g, &[Pos; 4]);
        let r = kos_run(&g, &all_pos, 1, 0.0, 0, KosInit::Ones).unwrap();
        assert_eq!(r.labels, vec![Pos, Pos]);
        assert_eq!(r.iterations_run, 1);
        let all_neg = answers_of(&g, &[Neg; 4]);
        let r = kos_run(&g, &all_neg, 10, 1e-5, 0, KosInit::Ones).unwrap();
        assert_eq!(r.labels, vec![Neg, Neg]);
    }

    #[test]
    fn kos_with_single_task_workers_ties() {
        let g = AssignmentGraph::from_edges(2, 4, vec![(0, 0), (0, 1), (1, 2), (1, 3)]).unwrap();
        let r = kos_run(&g, &answers_of(&g, &[Neg, Neg, Neg, Pos]), 5, 1e-5, 3, KosInit::RandomNormal).unwrap();
        assert_eq!(r.labels, vec![Pos, Pos]);
        assert!(r.margins.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn oracle_work_log_odds() {
        let g = star(3);
        let r = oracle_work(&g, &answers_of(&g, &[Pos, Neg, Neg]), &[0.9, 0.6, 0.6]).unwrap();
        assert_eq!(r.labels, vec![Pos]);
        let score = ln(9.0) - 2.0 * ln(1.5);
        assert!((score - 1.3863).abs() < 1e-4);
        assert!((r.margins[0] - tanh(score / 2.0)).abs() < 1e-15);

        let r = oracle_work(&g, &answers_of(&g, &[Neg, Neg, Pos]), &[0.5; 3]).unwrap();
        assert_eq!(r.labels, vec![Pos]);
        let r = oracle_work(&g, &answers_of(&g, &[Neg, Neg, Pos]), &[0.7; 3]).unwrap();
        assert_eq!(r.labels, vec![Neg]);
        // exact 0/1 reliabilities are clamped, not rejected
        let r = oracle_work(&g, &answers_of(&g, &[Neg, Pos, Pos]), &[1.0, 0.0, 0.5]).unwrap();
        assert_eq!(r.labels, vec![Neg]);
    }

    #[test]
    fn em_m_step_clamps_perfect_agreement() {
        let g = AssignmentGraph::from_edges(5, 1, (0..5).map(|i| (i, 0)).collect()).unwrap();
        let a = answers_of(&g, &[Pos, Neg, Pos, Pos, Neg]);
        let w = [1.0, 0.0, 1.0, 1.0, 0.0];
        let p = em_m_step(&g, &a, &w, 2.0, 1.0);
        assert_eq!(p, vec![1.0 - RELIABILITY_CLAMP]);
    }

    #[test]
    fn em_unanimous_fixed_point() {
        let g = crate::graph::generate_regular_bipartite(10, 3, 3, 0).unwrap();
        let a = answers_of(&g, &vec![Pos; g.n_edges()]);
        let r = em_run(&g, &a, 2.0, 1.0, 100, 1e-5).unwrap();
        assert!(r.labels.iter().all(|&l| l == Pos));
        assert_eq!(r.iterations_run, 1);
        assert!(r.converged);
    }

    #[test]
    fn ebp_single_answer() {
        let g = star(1);
        let a = answers_of(&g, &[Pos]);
        for rounds in 1..=3 {
            let r = ebp_run(&g, &a, rounds, &BpOptions::default()).unwrap();
            assert_eq!(r.labels, vec![Pos]);
        }
        assert!(ebp_run(&g, &a, 0, &BpOptions::default()).is_err());
    }

    #[test]
    fn ebp_with_perfect_workers_recovers_truth() {
        let g = crate::graph::generate_regular_bipartite(40, 3, 4, 2).unwrap();
        let prior = ReliabilityPrior::point(1.0).unwrap();
        let truth = crate::graph::sample_ground_truth(&g, &prior, 1);
        let a = crate::graph::sample_answers(&g, &truth, 2).unwrap();
        let p = smoothed_reliabilities(&g, &a, &truth.labels);
        assert!(p.iter().all(|&p| p == 5.0 / 6.0));
        let r = ebp_run(&g, &a, 1, &BpOptions::default()).unwrap();
        assert_eq!(r.labels, truth.labels);
    }

    #[test]
    fn spec_names_round_trip() {
        for name in estimator_names() {
            let spec: EstimatorSpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
        }
        assert_eq!("ebp2".parse::<EstimatorSpec>().unwrap().rounds, 2);
        assert!("ebp0".parse::<EstimatorSpec>().is_err());
        assert!("amf".parse::<EstimatorSpec>().is_err());
    }

    #[test]
    fn missing_side_information_is_reported() {
        let g = star(2);
        let a = answers_of(&g, &[Pos, Pos]);
        let side = SideInfo::default();
        for name in ["bp", "oracle-task", "oracle-work"] {
            let spec: EstimatorSpec = name.parse().unwrap();
            assert!(matches!(spec.run(&g, &a, &side), Err(Error::Missing(_))), "{name}");
        }
    }
}

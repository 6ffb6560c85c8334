//! Task/worker assignment graphs and the Dawid-Skene instance simulator.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::prior::ReliabilityPrior;
use crate::rng::rng_from_seed;

/// Number of full re-pairings tried before generation gives up.
pub const GENERATION_BUDGET: usize = 1000;

/// A binary label or answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub const fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub const fn as_i8(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub const fn flip(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    /// Sign decoding with ties broken towards `Pos`.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

impl core::ops::Neg for Label {
    type Output = Label;
    fn neg(self) -> Label {
        self.flip()
    }
}

impl TryFrom<i64> for Label {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(Error::param(format!("label must be -1 or +1, got {other}"))),
        }
    }
}

/// Bipartite task/worker graph. Adjacency lists hold edge indices in
/// ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssignmentGraph {
    n_tasks: usize,
    n_workers: usize,
    edges: Vec<(usize, usize)>,
    task_edges: Vec<Vec<usize>>,
    worker_edges: Vec<Vec<usize>>,
}

impl AssignmentGraph {
    /// Builds a graph from `(task, worker)` pairs, rejecting out-of-range ids
    /// and duplicate pairs.
    pub fn from_edges(n_tasks: usize, n_workers: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut task_edges = vec![Vec::new(); n_tasks];
        let mut worker_edges = vec![Vec::new(); n_workers];
        for (e, &(i, u)) in edges.iter().enumerate() {
            if i >= n_tasks || u >= n_workers {
                return Err(Error::param(format!(
                    "edge {e} = ({i}, {u}) out of range for {n_tasks} tasks and {n_workers} workers"
                )));
            }
            task_edges[i].push(e);
            worker_edges[u].push(e);
        }
        for (i, list) in task_edges.iter().enumerate() {
            let mut workers: Vec<usize> = list.iter().map(|&e| edges[e].1).collect();
            workers.sort_unstable();
            if workers.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::param(format!("duplicate (task, worker) pair on task {i}")));
            }
        }
        Ok(Self {
            n_tasks,
            n_workers,
            edges,
            task_edges,
            worker_edges,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    /// Edge indices incident to task `i` (the worker set M_i).
    pub fn task_edges(&self, i: usize) -> &[usize] {
        &self.task_edges[i]
    }

    /// Edge indices incident to worker `u` (the task set N_u).
    pub fn worker_edges(&self, u: usize) -> &[usize] {
        &self.worker_edges[u]
    }

    pub fn task_degree(&self, i: usize) -> usize {
        self.task_edges[i].len()
    }

    pub fn worker_degree(&self, u: usize) -> usize {
        self.worker_edges[u].len()
    }

    pub fn max_worker_degree(&self) -> usize {
        self.worker_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_task_degree(&self) -> usize {
        self.task_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True when no connected component contains a cycle.
    pub fn is_forest(&self) -> bool {
        // |E| = |V| - #components for a forest.
        let n = self.n_tasks + self.n_workers;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(i, u) in &self.edges {
            let a = find(&mut parent, i);
            let b = find(&mut parent, self.n_tasks + u);
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        true
    }
}

/// Hidden labels and worker reliabilities of a simulated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub labels: Vec<Label>,
    pub reliabilities: Vec<f64>,
}

impl GroundTruth {
    pub fn new(graph: &AssignmentGraph, labels: Vec<Label>, reliabilities: Vec<f64>) -> Result<Self> {
        Error::check_len("truth labels", graph.n_tasks(), labels.len())?;
        Error::check_len("worker reliabilities", graph.n_workers(), reliabilities.len())?;
        if let Some(p) = reliabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(format!("reliability {p} outside [0, 1]")));
        }
        Ok(Self {
            labels,
            reliabilities,
        })
    }
}

/// One answer per edge, aligned with [`AssignmentGraph::edges`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerMatrix {
    answers: Vec<Label>,
}

impl AnswerMatrix {
    pub fn new(graph: &AssignmentGraph, answers: Vec<Label>) -> Result<Self> {
        Error::check_len("answers", graph.n_edges(), answers.len())?;
        Ok(Self { answers })
    }

    pub fn get(&self, e: usize) -> Label {
        self.answers[e]
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.answers
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    /// Every answer flipped.
    pub fn negated(&self) -> Self {
        Self {
            answers: self.answers.iter().map(|a| a.flip()).collect(),
        }
    }
}

/// Random `(l, r)`-regular bipartite graph from the configuration model.
///
/// Worker half-edges are matched to task half-edges by a seeded random
/// permutation. Parallel edges are removed by degree-preserving switches with
/// uniformly drawn partner edges; if a pairing cannot be repaired the whole
/// permutation is redrawn, up to [`GENERATION_BUDGET`] times.
pub fn generate_regular_bipartite(n_tasks: usize, l: usize, r: usize, seed: u64) -> Result<AssignmentGraph> {
    if l == 0 || r == 0 {
        return Err(Error::param("degrees l and r must be at least 1"));
    }
    if !(n_tasks * l).is_multiple_of(r) {
        return Err(Error::param(format!(
            "n_tasks * l = {} is not divisible by r = {r}",
            n_tasks * l
        )));
    }
    let n_workers = n_tasks * l / r;
    if n_tasks > 0 && (l > n_workers || r > n_tasks) {
        return Err(Error::param(format!(
            "no simple ({l}, {r})-regular graph exists on {n_tasks} tasks and {n_workers} workers"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let n_edges = n_tasks * l;
    let mut stubs: Vec<usize> = (0..n_workers).flat_map(|u| core::iter::repeat_n(u, r)).collect();
    let switch_budget = 1000 + 20 * n_edges;

    for _ in 0..GENERATION_BUDGET {
        stubs.shuffle(&mut rng);
        // workers_of[i] holds task i's l worker slots.
        let mut workers_of: Vec<Vec<usize>> = stubs.chunks(l).map(<[usize]>::to_vec).collect();
        if repair_parallel_edges(&mut workers_of, switch_budget, &mut rng) {
            let mut edges = Vec::with_capacity(n_edges);
            for (i, ws) in workers_of.iter_mut().enumerate() {
                ws.sort_unstable();
                edges.extend(ws.iter().map(|&u| (i, u)));
            }
            return AssignmentGraph::from_edges(n_tasks, n_workers, edges);
        }
    }
    Err(Error::Generation {
        budget: GENERATION_BUDGET,
    })
}

fn first_duplicate(workers_of: &[Vec<usize>]) -> Option<(usize, usize)> {
    workers_of.iter().enumerate().find_map(|(i, ws)| {
        (1..ws.len()).find(|&a| ws[..a].contains(&ws[a])).map(|slot| (i, slot))
    })
}

fn repair_parallel_edges<R: Rng>(workers_of: &mut [Vec<usize>], budget: usize, rng: &mut R) -> bool {
    let n_tasks = workers_of.len();
    if n_tasks == 0 {
        return true;
    }
    let l = workers_of[0].len();
    let mut tries = 0;
    while let Some((i, a)) = first_duplicate(workers_of) {
        loop {
            if tries == budget {
                return false;
            }
            tries += 1;
            let j = rng.random_range(0..n_tasks);
            let b = rng.random_range(0..l);
            let u = workers_of[i][a];
            let v = workers_of[j][b];
            if i == j || u == v || workers_of[i].contains(&v) || workers_of[j].contains(&u) {
                continue;
            }
            workers_of[i][a] = v;
            workers_of[j][b] = u;
            break;
        }
    }
    true
}

/// Labels uniform on {-1, +1}; reliabilities i.i.d. from `prior`.
pub fn sample_ground_truth(graph: &AssignmentGraph, prior: &ReliabilityPrior, seed: u64) -> GroundTruth {
    let mut rng = rng_from_seed(seed);
    let labels = (0..graph.n_tasks())
        .map(|_| if rng.random_bool(0.5) { Label::Pos } else { Label::Neg })
        .collect();
    let reliabilities = (0..graph.n_workers()).map(|_| prior.sample(&mut rng)).collect();
    GroundTruth {
        labels,
        reliabilities,
    }
}

/// Each answer equals the true label with probability `p_u`, independently.
pub fn sample_answers(graph: &AssignmentGraph, truth: &GroundTruth, seed: u64) -> Result<AnswerMatrix> {
    Error::check_len("truth labels", graph.n_tasks(), truth.labels.len())?;
    Error::check_len("worker reliabilities", graph.n_workers(), truth.reliabilities.len())?;
    let mut rng = rng_from_seed(seed);
    let answers = graph
        .edges()
        .iter()
        .map(|&(i, u)| {
            let correct = rng.random::<f64>() < truth.reliabilities[u];
            if correct {
                truth.labels[i]
            } else {
                truth.labels[i].flip()
            }
        })
        .collect();
    Ok(AnswerMatrix { answers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_regular(g: &AssignmentGraph, l: usize, r: usize) {
        assert!((0..g.n_tasks()).all(|i| g.task_degree(i) == l));
        assert!((0..g.n_workers()).all(|u| g.worker_degree(u) == r));
        let by_task: usize = (0..g.n_tasks()).map(|i| g.task_degree(i)).sum();
        let by_worker: usize = (0..g.n_workers()).map(|u| g.worker_degree(u)).sum();
        assert_eq!(by_task, g.n_edges());
        assert_eq!(by_worker, g.n_edges());
    }

    #[test]
    fn small_regular_graph() {
        let g = generate_regular_bipartite(4, 2, 2, 0).unwrap();
        assert_eq!(g.n_workers(), 4);
        assert_eq!(g.n_edges(), 8);
        assert_regular(&g, 2, 2);
    }

    #[test]
    fn thousand_task_graph() {
        for seed in 0..5 {
            let g = generate_regular_bipartite(200, 5, 5, seed).unwrap();
            assert_eq!(g.n_workers(), 200);
            assert_eq!(g.n_edges(), 1000);
            assert_regular(&g, 5, 5);
        }
        let g = generate_regular_bipartite(200, 15, 5, 3).unwrap();
        assert_regular(&g, 15, 5);
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(matches!(generate_regular_bipartite(3, 2, 4, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_regular_bipartite(3, 0, 1, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn infeasible_degrees_are_rejected() {
        // 2 tasks, l = 4 needs at least 4 distinct workers but only 2 exist.
        assert!(generate_regular_bipartite(2, 4, 4, 0).is_err());
    }

    #[test]
    fn complete_bipartite_is_reachable() {
        let g = generate_regular_bipartite(3, 3, 3, 11).unwrap();
        assert_regular(&g, 3, 3);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_regular_bipartite(60, 3, 4, 99).unwrap();
        let b = generate_regular_bipartite(60, 3, 4, 99).unwrap();
        let c = generate_regular_bipartite(60, 3, 4, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn from_edges_rejects_bad_input() {
        assert!(AssignmentGraph::from_edges(1, 1, vec![(0, 1)]).is_err());
        assert!(AssignmentGraph::from_edges(1, 1, vec![(0, 0), (0, 0)]).is_err());
    }

    #[test]
    fn degenerate_priors_give_degenerate_answers() {
        let g = generate_regular_bipartite(30, 3, 3, 1).unwrap();
        let perfect = sample_ground_truth(&g, &ReliabilityPrior::point(1.0).unwrap(), 2);
        assert!(perfect.reliabilities.iter().all(|&p| p == 1.0));
        let answers = sample_answers(&g, &perfect, 3).unwrap();
        for (e, &(i, _)) in g.edges().iter().enumerate() {
            assert_eq!(answers.get(e), perfect.labels[i]);
        }
        let adversarial = GroundTruth::new(&g, perfect.labels.clone(), vec![0.0; g.n_workers()]).unwrap();
        let answers = sample_answers(&g, &adversarial, 3).unwrap();
        for (e, &(i, _)) in g.edges().iter().enumerate() {
            assert_eq!(answers.get(e), -perfect.labels[i]);
        }
    }

    #[test]
    fn spammer_hammer_atoms_are_balanced() {
        let g = AssignmentGraph::from_edges(1, 10_000, Vec::new()).unwrap();
        let truth = sample_ground_truth(&g, &ReliabilityPrior::spammer_hammer(), 5);
        assert!(truth.reliabilities.iter().all(|&p| p == 0.5 || p == 0.9));
        let hammers = truth.reliabilities.iter().filter(|&&p| p == 0.9).count();
        let frac = hammers as f64 / 10_000.0;
        assert!((frac - 0.5).abs() <= 0.02, "{frac}");
    }

    #[test]
    fn answer_match_rate_tracks_reliability() {
        // one worker per edge so the 10,000 answers are independent
        let edges: Vec<_> = (0..10_000).map(|e| (e, e)).collect();
        let g = AssignmentGraph::from_edges(10_000, 10_000, edges).unwrap();
        let truth = sample_ground_truth(&g, &ReliabilityPrior::point(0.9).unwrap(), 8);
        let answers = sample_answers(&g, &truth, 9).unwrap();
        let matches = (0..g.n_edges()).filter(|&e| answers.get(e) == truth.labels[e]).count();
        let rate = matches as f64 / 10_000.0;
        // 3 standard errors of a Bernoulli(0.9) mean is 0.009
        assert!((rate - 0.9).abs() <= 0.01, "{rate}");
    }

    #[test]
    fn forest_detection() {
        let tree = AssignmentGraph::from_edges(2, 2, vec![(0, 0), (1, 0), (1, 1)]).unwrap();
        assert!(tree.is_forest());
        let cycle = AssignmentGraph::from_edges(2, 2, vec![(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        assert!(!cycle.is_forest());
    }
}

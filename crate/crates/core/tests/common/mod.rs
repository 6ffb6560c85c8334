#![allow(dead_code)]

use crowdbp::{AnswerMatrix, AssignmentGraph, Label, ReliabilityPrior};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random bipartite tree grown by attaching each new node to a uniformly
/// chosen existing node of the other side.
pub fn random_tree(rng: &mut ChaCha8Rng, max_tasks: usize) -> AssignmentGraph {
    let target = rng.random_range(1..=max_tasks);
    let (mut tasks, mut workers) = (1usize, 0usize);
    let mut edges = Vec::new();
    while tasks < target {
        let attach_to_task = workers == 0 || rng.random_bool(0.5);
        if attach_to_task {
            edges.push((rng.random_range(0..tasks), workers));
            workers += 1;
        } else {
            edges.push((tasks, rng.random_range(0..workers)));
            tasks += 1;
        }
    }
    // a few extra leaf workers so single tasks still see answers
    for _ in 0..rng.random_range(0..3) {
        edges.push((rng.random_range(0..tasks), workers));
        workers += 1;
    }
    AssignmentGraph::from_edges(tasks, workers, edges).unwrap()
}

/// Random simple bipartite graph, loops allowed.
pub fn random_graph(rng: &mut ChaCha8Rng, n_tasks: usize, n_workers: usize, density: f64) -> AssignmentGraph {
    let mut edges = Vec::new();
    for i in 0..n_tasks {
        for u in 0..n_workers {
            if rng.random_bool(density) {
                edges.push((i, u));
            }
        }
    }
    AssignmentGraph::from_edges(n_tasks, n_workers, edges).unwrap()
}

/// One to three atoms with reliabilities bounded away from 0 and 1.
pub fn random_discrete_prior(rng: &mut ChaCha8Rng) -> ReliabilityPrior {
    let k = rng.random_range(1..=3);
    let atoms: Vec<(f64, f64)> = (0..k)
        .map(|_| (rng.random_range(0.05..0.95), rng.random_range(0.1..1.0)))
        .collect();
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    ReliabilityPrior::atoms(atoms.into_iter().map(|(p, w)| (p, w / total))).unwrap()
}

pub fn random_label(rng: &mut ChaCha8Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Pos
    } else {
        Label::Neg
    }
}

pub fn random_answers(rng: &mut ChaCha8Rng, graph: &AssignmentGraph) -> AnswerMatrix {
    let a = (0..graph.n_edges()).map(|_| random_label(rng)).collect();
    AnswerMatrix::new(graph, a).unwrap()
}

//! Exact and oracle-assisted inference used as lower bounds and as test
//! references: exhaustive posterior marginals, breadth-first spanning trees,
//! the clamped-tree task oracle, and exact accuracy gains on tiny instances.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::bp::{order_free_sum, task_outgoing, worker_outgoing_slots, EstimateReport, Kernel, Pair, Scratch};
use crate::error::{Error, Result};
use crate::graph::{AnswerMatrix, AssignmentGraph, Label};
use crate::math::{exp, log_add, tanh};
use crate::prior::{FactorTable, ReliabilityPrior, WorkerFactor};

/// Largest task count accepted by [`brute_force_marginals`].
pub const MAX_ENUMERATED_TASKS: usize = 20;
/// Largest edge count accepted by the exact gain computations.
pub const MAX_ENUMERATED_EDGES: usize = 10;

/// Exact posterior `(P(s_i = +1 | A), P(s_i = -1 | A))` for every task by
/// enumerating all `2^n` label vectors.
pub fn brute_force_marginals(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    prior: &ReliabilityPrior,
) -> Result<Vec<Pair>> {
    let n = graph.n_tasks();
    if n > MAX_ENUMERATED_TASKS {
        return Err(Error::TooLarge {
            what: "tasks",
            size: n,
            limit: MAX_ENUMERATED_TASKS,
        });
    }
    Error::check_len("answers", graph.n_edges(), answers.len())?;
    let table = FactorTable::new(prior, graph.max_worker_degree());
    let mut log_pos = vec![f64::NEG_INFINITY; n];
    let mut log_neg = vec![f64::NEG_INFINITY; n];
    let mut matches = vec![0usize; graph.n_workers()];
    for s in 0u32..(1u32 << n) {
        let label = |i: usize| if s >> i & 1 == 1 { Label::Pos } else { Label::Neg };
        matches.iter_mut().for_each(|c| *c = 0);
        for (e, &(i, u)) in graph.edges().iter().enumerate() {
            matches[u] += usize::from(answers.get(e) == label(i));
        }
        let weight: f64 = (0..graph.n_workers())
            .map(|u| table.get(matches[u], graph.worker_degree(u)))
            .sum();
        for i in 0..n {
            let slot = if label(i) == Label::Pos { &mut log_pos[i] } else { &mut log_neg[i] };
            *slot = log_add(*slot, weight);
        }
    }
    (0..n)
        .map(|i| {
            Pair::from_logs(log_pos[i], log_neg[i]).ok_or(Error::NumericDegeneracy {
                edge: graph.task_edges(i).first().copied().unwrap_or(0),
                reason: "answers have zero probability under the prior",
            })
        })
        .collect()
}

/// Breadth-first spanning tree of the root's component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanningTree {
    pub root: usize,
    /// Tree edges in discovery order; each discovers its far endpoint.
    pub tree_edges: Vec<usize>,
    /// Tasks of the tree, other than the root, incident to a non-tree edge.
    pub boundary_tasks: Vec<usize>,
    /// Tree tasks in discovery order, root first.
    pub tasks: Vec<usize>,
    /// Number of hops from the root to the deepest tree node.
    pub height: usize,
    /// Whether each tree edge discovered a worker (else a task).
    discovers_worker: Vec<bool>,
}

/// Sorted neighbor lists: `(neighbor id, edge)` per task and per worker.
struct Neighbors {
    of_task: Vec<Vec<(usize, usize)>>,
    of_worker: Vec<Vec<(usize, usize)>>,
}

impl Neighbors {
    fn new(graph: &AssignmentGraph) -> Self {
        let sorted = |list: &[usize], far: &dyn Fn(usize) -> usize| {
            let mut v: Vec<(usize, usize)> = list.iter().map(|&e| (far(e), e)).collect();
            v.sort_unstable();
            v
        };
        Self {
            of_task: (0..graph.n_tasks())
                .map(|i| sorted(graph.task_edges(i), &|e| graph.edge(e).1))
                .collect(),
            of_worker: (0..graph.n_workers())
                .map(|u| sorted(graph.worker_edges(u), &|e| graph.edge(e).0))
                .collect(),
        }
    }
}

#[derive(Clone, Copy)]
enum Node {
    Task(usize),
    Worker(usize),
}

/// Breadth-first spanning tree of the root's component, visiting neighbors
/// in ascending id order.
pub fn extract_bfs_tree(graph: &AssignmentGraph, root: usize) -> Result<SpanningTree> {
    extract_bfs_tree_within(graph, root, None)
}

/// Breadth-first tree restricted to nodes within `max_hops` of the root.
/// Tasks at the cut are boundary tasks whenever an edge leaves the ball.
pub fn extract_bfs_tree_within(graph: &AssignmentGraph, root: usize, max_hops: Option<usize>) -> Result<SpanningTree> {
    if root >= graph.n_tasks() {
        return Err(Error::param(alloc::format!("root task {root} out of range")));
    }
    Ok(bfs(graph, &Neighbors::new(graph), root, max_hops, &mut vec![false; graph.n_edges()]))
}

fn bfs(
    graph: &AssignmentGraph,
    nbrs: &Neighbors,
    root: usize,
    max_hops: Option<usize>,
    in_tree: &mut [bool],
) -> SpanningTree {
    let mut task_depth = vec![usize::MAX; graph.n_tasks()];
    let mut worker_depth = vec![usize::MAX; graph.n_workers()];
    let mut tree_edges = Vec::new();
    let mut discovers_worker = Vec::new();
    let mut tasks = vec![root];
    let mut queue = VecDeque::from([Node::Task(root)]);
    task_depth[root] = 0;
    let mut height = 0;
    let limit = max_hops.unwrap_or(usize::MAX);
    while let Some(node) = queue.pop_front() {
        match node {
            Node::Task(i) => {
                let d = task_depth[i];
                if d >= limit {
                    continue;
                }
                for &(u, e) in &nbrs.of_task[i] {
                    if worker_depth[u] == usize::MAX {
                        worker_depth[u] = d + 1;
                        height = height.max(d + 1);
                        tree_edges.push(e);
                        discovers_worker.push(true);
                        in_tree[e] = true;
                        queue.push_back(Node::Worker(u));
                    }
                }
            }
            Node::Worker(u) => {
                let d = worker_depth[u];
                if d >= limit {
                    continue;
                }
                for &(i, e) in &nbrs.of_worker[u] {
                    if task_depth[i] == usize::MAX {
                        task_depth[i] = d + 1;
                        height = height.max(d + 1);
                        tree_edges.push(e);
                        discovers_worker.push(false);
                        in_tree[e] = true;
                        tasks.push(i);
                        queue.push_back(Node::Task(i));
                    }
                }
            }
        }
    }
    let mut boundary_tasks: Vec<usize> = tasks
        .iter()
        .copied()
        .filter(|&i| i != root && graph.task_edges(i).iter().any(|&e| !in_tree[e]))
        .collect();
    boundary_tasks.sort_unstable();
    SpanningTree {
        root,
        tree_edges,
        boundary_tasks,
        tasks,
        height,
        discovers_worker,
    }
}

/// Exact root margin on a spanning tree with boundary tasks clamped to the
/// given labels, by one leaf-to-root sum-product pass.
struct TreePass<'a> {
    graph: &'a AssignmentGraph,
    answers: &'a AnswerMatrix,
    factor: &'a WorkerFactor,
    kernel: Kernel,
    /// Upward message on each tree edge, toward the root.
    up: Vec<Pair>,
    scratch: Scratch,
    llrs: Vec<f64>,
    pairs: Vec<Pair>,
    local_answers: Vec<Label>,
    out: Vec<Pair>,
    suffix: Vec<f64>,
}

impl<'a> TreePass<'a> {
    fn new(graph: &'a AssignmentGraph, answers: &'a AnswerMatrix, factor: &'a WorkerFactor) -> Result<Self> {
        Ok(Self {
            graph,
            answers,
            factor,
            kernel: Kernel::Auto.resolve(factor)?,
            up: vec![Pair::UNIFORM; graph.n_edges()],
            scratch: Scratch::default(),
            llrs: Vec::new(),
            pairs: Vec::new(),
            local_answers: Vec::new(),
            out: Vec::new(),
            suffix: Vec::new(),
        })
    }

    /// Root margin `b(+1) - b(-1)` given the tree, the edge membership mask
    /// and per-task clamps.
    fn root_margin(&mut self, tree: &SpanningTree, in_tree: &[bool], clamp: &[Option<Label>]) -> Result<f64> {
        let graph = self.graph;
        // children are discovered after their parents, so a reverse sweep
        // sees every child message before it is needed
        for (&e, &child_is_worker) in tree.tree_edges.iter().zip(&tree.discovers_worker).rev() {
            let (i, u) = graph.edge(e);
            if child_is_worker {
                self.worker_up(u, e, in_tree)?;
            } else {
                self.task_up(i, e, in_tree, clamp);
            }
        }
        let mut buf = Vec::new();
        let llr = order_free_sum(
            graph
                .task_edges(tree.root)
                .iter()
                .filter(|&&e| in_tree[e])
                .map(|&e| self.up[e].llr()),
            &mut buf,
        );
        Ok(tanh(llr / 2.0))
    }

    fn task_up(&mut self, i: usize, parent: usize, in_tree: &[bool], clamp: &[Option<Label>]) {
        if let Some(label) = clamp[i] {
            self.up[parent] = Pair::point(label);
            return;
        }
        let edges: Vec<usize> = self.graph.task_edges(i).iter().copied().filter(|&e| in_tree[e]).collect();
        self.llrs.clear();
        self.llrs
            .extend(edges.iter().map(|&e| if e == parent { 0.0 } else { self.up[e].llr() }));
        self.out.clear();
        self.out.resize(edges.len(), Pair::UNIFORM);
        task_outgoing(&self.llrs, &mut self.out, &mut self.suffix);
        let k = edges.iter().position(|&e| e == parent).expect("parent edge is a tree edge");
        self.up[parent] = self.out[k];
    }

    fn worker_up(&mut self, u: usize, parent: usize, in_tree: &[bool]) -> Result<()> {
        let edges: Vec<usize> = self.graph.worker_edges(u).iter().copied().filter(|&e| in_tree[e]).collect();
        self.local_answers.clear();
        self.local_answers.extend(edges.iter().map(|&e| self.answers.get(e)));
        self.pairs.clear();
        self.pairs
            .extend(edges.iter().map(|&e| if e == parent { Pair::UNIFORM } else { self.up[e] }));
        let k = edges.iter().position(|&e| e == parent).expect("parent edge is a tree edge");
        self.out.clear();
        self.out.resize(edges.len(), Pair::UNIFORM);
        worker_outgoing_slots(
            self.kernel,
            self.factor,
            &self.local_answers,
            &self.pairs,
            &mut self.out,
            k..k + 1,
            &mut self.scratch,
        )
        .map_err(|k| Error::NumericDegeneracy {
            edge: edges[k],
            reason: "worker-to-task message has zero total weight",
        })?;
        self.up[parent] = self.out[k];
        Ok(())
    }
}

/// Oracle-Task: for every task, exact inference on its breadth-first
/// spanning tree with each boundary task clamped to its true label.
pub fn oracle_task_estimate(
    graph: &AssignmentGraph,
    answers: &AnswerMatrix,
    prior: &ReliabilityPrior,
    truth: &[Label],
) -> Result<EstimateReport> {
    Error::check_len("truth labels", graph.n_tasks(), truth.len())?;
    Error::check_len("answers", graph.n_edges(), answers.len())?;
    let factor = WorkerFactor::new(prior, graph.max_worker_degree());
    let nbrs = Neighbors::new(graph);
    let mut pass = TreePass::new(graph, answers, &factor)?;
    let mut in_tree = vec![false; graph.n_edges()];
    let mut clamp = vec![None; graph.n_tasks()];
    let mut margins = Vec::with_capacity(graph.n_tasks());
    let mut height = 0;
    for root in 0..graph.n_tasks() {
        in_tree.iter_mut().for_each(|b| *b = false);
        let tree = bfs(graph, &nbrs, root, None, &mut in_tree);
        for &j in &tree.boundary_tasks {
            clamp[j] = Some(truth[j]);
        }
        margins.push(pass.root_margin(&tree, &in_tree, &clamp)?);
        for &j in &tree.boundary_tasks {
            clamp[j] = None;
        }
        height = height.max(tree.height);
    }
    Ok(EstimateReport::from_margins(margins, height, true, 0.0))
}

/// Enumeration context shared by the exact gain computations.
struct Enumeration<'a> {
    graph: &'a AssignmentGraph,
    /// Linear factor `f(c, r)` indexed as `table[r][c]`.
    table: Vec<Vec<f64>>,
    /// Tasks whose labels are enumerated; the root is `tasks[0]`.
    tasks: Vec<usize>,
}

impl<'a> Enumeration<'a> {
    fn new(graph: &'a AssignmentGraph, prior: &ReliabilityPrior, root: usize, edges: &[usize]) -> Result<Self> {
        if root >= graph.n_tasks() {
            return Err(Error::param(alloc::format!("root task {root} out of range")));
        }
        if graph.n_edges() > MAX_ENUMERATED_EDGES {
            return Err(Error::TooLarge {
                what: "edges",
                size: graph.n_edges(),
                limit: MAX_ENUMERATED_EDGES,
            });
        }
        let r_max = graph.max_worker_degree();
        let log_table = FactorTable::new(prior, r_max);
        let table = (0..=r_max)
            .map(|r| (0..=r).map(|c| exp(log_table.get(c, r))).collect())
            .collect();
        let mut tasks = vec![root];
        for &e in edges {
            let i = graph.edge(e).0;
            if !tasks.contains(&i) {
                tasks.push(i);
            }
        }
        Ok(Self { graph, table, tasks })
    }

    /// Joint weight `prod_u f(c_u, r_u)` over the workers touching `edges`,
    /// for labels `s` (bit k = label of `tasks[k]`) and answers `a` (bit k =
    /// answer on `edges[k]`), together with the weight of the negated labels.
    fn weights(&self, edges: &[usize], s: u32, a: u32, matches: &mut [usize], degree: &mut [usize]) -> (f64, f64) {
        for &e in edges {
            let u = self.graph.edge(e).1;
            matches[u] = 0;
            degree[u] = 0;
        }
        for (k, &e) in edges.iter().enumerate() {
            let (i, u) = self.graph.edge(e);
            let slot = self.tasks.iter().position(|&t| t == i).expect("task enumerated");
            let label = s >> slot & 1;
            let answer = a >> k & 1;
            matches[u] += usize::from(label == answer);
            degree[u] += 1;
        }
        let mut w = 1.0;
        let mut w_flip = 1.0;
        let mut seen = Vec::new();
        for &e in edges {
            let u = self.graph.edge(e).1;
            if seen.contains(&u) {
                continue;
            }
            seen.push(u);
            let (c, r) = (matches[u], degree[u]);
            w *= self.table[r][c];
            w_flip *= self.table[r][r - c];
        }
        (w, w_flip)
    }
}

/// Exact accuracy gain `E|P(s_root = +1 | info) - 1/2|` of the posterior
/// decision for `root` using all answers versus only `subset` of the edges.
///
/// Both values are accumulated from the same joint weights with answers
/// outside the subset in the inner loop, so `delta_full >= delta_subset`
/// holds exactly in floating point, not just up to rounding.
pub fn subset_monotonicity_check(
    graph: &AssignmentGraph,
    prior: &ReliabilityPrior,
    root: usize,
    subset: &[usize],
) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..graph.n_edges()).collect();
    let ctx = Enumeration::new(graph, prior, root, &all)?;
    if let Some(&e) = subset.iter().find(|&&e| e >= graph.n_edges()) {
        return Err(Error::param(alloc::format!("edge {e} out of range")));
    }
    let mut sub: Vec<usize> = subset.to_vec();
    sub.sort_unstable();
    sub.dedup();
    let rest: Vec<usize> = all.iter().copied().filter(|e| !sub.contains(e)).collect();
    // edges ordered as [subset..., rest...] so answer bits split cleanly
    let order: Vec<usize> = sub.iter().chain(&rest).copied().collect();
    let n = ctx.tasks.len();
    let mut matches = vec![0; graph.n_workers()];
    let mut degree = vec![0; graph.n_workers()];
    let mut full = 0.0;
    let mut partial = 0.0;
    for a_sub in 0u32..(1 << sub.len()) {
        let mut group_abs = 0.0;
        let mut group_sum = 0.0;
        for a_rest in 0u32..(1 << rest.len()) {
            let a = a_sub | (a_rest << sub.len());
            // X(A) = P(s_root = +1, A) - P(s_root = -1, A); root is bit 0.
            let mut x = 0.0;
            for s_others in 0u32..(1 << (n - 1)) {
                let s = 1 | (s_others << 1);
                let (w, w_flip) = ctx.weights(&order, s, a, &mut matches, &mut degree);
                x += w - w_flip;
            }
            group_abs += libm::fabs(x);
            group_sum += x;
        }
        full += group_abs;
        partial += libm::fabs(group_sum);
    }
    let scale = 0.5 * libm::ldexp(1.0, -(n as i32));
    let delta_full = full * scale;
    let delta_subset = if sub.is_empty() { 0.0 } else { partial * scale };
    Ok((delta_full, delta_subset))
}

/// Exact gain of the clamped-tree oracle for `root`: posterior from the
/// answers on the breadth-first tree within `max_hops` of the root plus the
/// true labels of its boundary tasks.
pub fn oracle_delta(
    graph: &AssignmentGraph,
    prior: &ReliabilityPrior,
    root: usize,
    max_hops: Option<usize>,
) -> Result<f64> {
    let tree = extract_bfs_tree_within(graph, root, max_hops)?;
    let edges = tree.tree_edges.clone();
    let mut ctx = Enumeration::new(graph, prior, root, &edges)?;
    for &i in &tree.boundary_tasks {
        if !ctx.tasks.contains(&i) {
            ctx.tasks.push(i);
        }
    }
    let n = ctx.tasks.len();
    let boundary_slots: Vec<usize> = tree
        .boundary_tasks
        .iter()
        .map(|i| ctx.tasks.iter().position(|t| t == i).expect("listed"))
        .collect();
    let mut matches = vec![0; graph.n_workers()];
    let mut degree = vec![0; graph.n_workers()];
    let mut acc = vec![0.0; 1 << boundary_slots.len()];
    let mut total = 0.0;
    for a in 0u32..(1 << edges.len()) {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for s in 0u32..(1 << n) {
            let key = boundary_slots
                .iter()
                .enumerate()
                .fold(0usize, |k, (b, &slot)| k | ((s as usize >> slot & 1) << b));
            let (w, _) = ctx.weights(&edges, s, a, &mut matches, &mut degree);
            if s & 1 == 1 {
                acc[key] += w;
            } else {
                acc[key] -= w;
            }
        }
        total += acc.iter().map(|v| libm::fabs(*v)).sum::<f64>();
    }
    Ok(0.5 * total * libm::ldexp(1.0, -(n as i32)))
}

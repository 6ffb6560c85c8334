//! Edge-list CSV datasets.
//!
//! One row per answer: `task,worker,answer[,truth[,reliability]]`. Task and
//! worker ids are arbitrary strings mapped to contiguous indices in order of
//! first appearance. An optional header row starting with `task` is skipped.
//! A comment line `# alphabet=01` switches answers and truth labels from the
//! default `{-1, +1}` encoding to `{0, 1}` with 0 read as -1.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crowdbp::estimators::smoothed_reliabilities;
use crowdbp::rng::{derive_seed, rng_from_seed, stage};
use crowdbp::{AnswerMatrix, AssignmentGraph, EstimateReport, EstimatorSpec, Label, ReliabilityPrior, SideInfo};
use rand::seq::index;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Alphabet {
    #[default]
    PlusMinusOne,
    ZeroOne,
}

impl Alphabet {
    fn parse(self, field: &str) -> Option<Label> {
        match (self, field.trim()) {
            (Alphabet::PlusMinusOne, "+1" | "1") | (Alphabet::ZeroOne, "1") => Some(Label::Pos),
            (Alphabet::PlusMinusOne, "-1") | (Alphabet::ZeroOne, "0") => Some(Label::Neg),
            _ => None,
        }
    }

    fn format(self, label: Label) -> &'static str {
        match (self, label) {
            (Alphabet::PlusMinusOne, Label::Pos) => "+1",
            (Alphabet::PlusMinusOne, Label::Neg) => "-1",
            (Alphabet::ZeroOne, Label::Pos) => "1",
            (Alphabet::ZeroOne, Label::Neg) => "0",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: AssignmentGraph,
    pub answers: AnswerMatrix,
    pub truth_labels: Option<Vec<Label>>,
    pub measured_reliabilities: Option<Vec<f64>>,
    pub task_names: Vec<String>,
    pub worker_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generated names `t<i>` and `w<u>`.
    pub fn new(
        graph: AssignmentGraph,
        answers: AnswerMatrix,
        truth_labels: Option<Vec<Label>>,
        measured_reliabilities: Option<Vec<f64>>,
    ) -> Result<Self> {
        let task_names = (0..graph.n_tasks()).map(|i| format!("t{i}")).collect();
        let worker_names = (0..graph.n_workers()).map(|u| format!("w{u}")).collect();
        let d = Dataset {
            graph,
            answers,
            truth_labels,
            measured_reliabilities,
            task_names,
            worker_names,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        let check = |what, expected, found| {
            if expected == found {
                Ok(())
            } else {
                Err(HarnessError::from(crowdbp::Error::Dimension { what, expected, found }))
            }
        };
        check("answers", self.graph.n_edges(), self.answers.len())?;
        check("task names", self.graph.n_tasks(), self.task_names.len())?;
        check("worker names", self.graph.n_workers(), self.worker_names.len())?;
        if let Some(t) = &self.truth_labels {
            check("truth labels", self.graph.n_tasks(), t.len())?;
        }
        if let Some(p) = &self.measured_reliabilities {
            check("measured reliabilities", self.graph.n_workers(), p.len())?;
        }
        Ok(())
    }

    /// Worker reliabilities from the file, or else measured as the smoothed
    /// agreement rate `(1 + matches) / (2 + answers)` with the truth column.
    pub fn reliabilities(&self) -> Option<Vec<f64>> {
        self.measured_reliabilities.clone().or_else(|| {
            self.truth_labels
                .as_ref()
                .map(|t| smoothed_reliabilities(&self.graph, &self.answers, t))
        })
    }
}

/// Runs `spec` on a dataset. Side information comes from the file: truth
/// labels for the task oracle, reliabilities (given or measured) for the
/// worker oracle. Without an explicit `prior`, estimators that need one get
/// the empirical distribution of the reliabilities.
pub fn infer(dataset: &Dataset, spec: &EstimatorSpec, prior: Option<&ReliabilityPrior>, seed: u64) -> Result<EstimateReport> {
    let reliabilities = dataset.reliabilities();
    let empirical = match (prior, &reliabilities) {
        (None, Some(p)) if spec.needs_prior() => Some(ReliabilityPrior::empirical(p)?),
        _ => None,
    };
    let side = SideInfo {
        prior: prior.or(empirical.as_ref()),
        truth: dataset.truth_labels.as_deref(),
        reliabilities: reliabilities.as_deref(),
        seed: derive_seed(seed, &[stage::ESTIMATOR]),
    };
    Ok(spec.run(&dataset.graph, &dataset.answers, &side)?)
}

/// Reads a dataset from an edge-list CSV file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(File::open(path)?)
}

pub fn read_dataset(reader: impl Read) -> Result<Dataset> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    let mut alphabet = Alphabet::default();
    for (k, line) in text.lines().enumerate() {
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            continue;
        };
        if let Some(value) = comment.trim().strip_prefix("alphabet=") {
            alphabet = match value.trim() {
                "pm1" => Alphabet::PlusMinusOne,
                "01" => Alphabet::ZeroOne,
                other => return Err(HarnessError::data(k as u64 + 1, format!("unknown alphabet {other:?}"))),
            };
        }
    }

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut tasks = IdMap::default();
    let mut workers = IdMap::default();
    let mut edges = Vec::new();
    let mut answers = Vec::new();
    let mut truth: Vec<Option<Label>> = Vec::new();
    let mut reliability: Vec<Option<f64>> = Vec::new();
    let mut seen = HashMap::new();
    let mut width = None;
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.get(0) == Some("task") && edges.is_empty() && width.is_none() {
            continue;
        }
        if !(3..=5).contains(&record.len()) {
            return Err(HarnessError::data(line, format!("expected 3 to 5 fields, found {}", record.len())));
        }
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(HarnessError::data(line, "rows have different numbers of fields"));
        }
        let i = tasks.id(&record[0]);
        let u = workers.id(&record[1]);
        if let Some(first) = seen.insert((i, u), line) {
            return Err(HarnessError::data(
                line,
                format!("duplicate answer of worker {:?} on task {:?} (first on line {first})", &record[1], &record[0]),
            ));
        }
        let a = alphabet
            .parse(&record[2])
            .ok_or_else(|| HarnessError::data(line, format!("answer {:?} outside the {alphabet:?} alphabet", &record[2])))?;
        edges.push((i, u));
        answers.push(a);
        if let Some(field) = record.get(3) {
            let t = alphabet
                .parse(field)
                .ok_or_else(|| HarnessError::data(line, format!("truth {field:?} outside the {alphabet:?} alphabet")))?;
            set_consistent(&mut truth, i, t, line, "truth label")?;
        }
        if let Some(field) = record.get(4) {
            let p: f64 = field
                .parse()
                .ok()
                .filter(|p| (0.0..=1.0).contains(p))
                .ok_or_else(|| HarnessError::data(line, format!("reliability {field:?} is not a number in [0, 1]")))?;
            set_consistent(&mut reliability, u, p, line, "reliability")?;
        }
    }
    if edges.is_empty() {
        return Err(HarnessError::Format("no answer rows".into()));
    }

    let graph = AssignmentGraph::from_edges(tasks.names.len(), workers.names.len(), edges)?;
    let answers = AnswerMatrix::new(&graph, answers)?;
    let truth_labels = match width {
        Some(w) if w >= 4 => Some(truth.into_iter().map(|t| t.expect("every task has a row")).collect()),
        _ => None,
    };
    let measured_reliabilities = match width {
        Some(5) => Some(reliability.into_iter().map(|p| p.expect("every worker has a row")).collect()),
        _ => None,
    };
    let d = Dataset {
        graph,
        answers,
        truth_labels,
        measured_reliabilities,
        task_names: tasks.names,
        worker_names: workers.names,
    };
    d.validate()?;
    Ok(d)
}

fn set_consistent<T: PartialEq + Copy + std::fmt::Debug>(
    slots: &mut Vec<Option<T>>,
    id: usize,
    value: T,
    line: u64,
    what: &str,
) -> Result<()> {
    if slots.len() <= id {
        slots.resize(id + 1, None);
    }
    match slots[id] {
        Some(old) if old != value => Err(HarnessError::data(line, format!("{what} {value:?} contradicts earlier {old:?}"))),
        _ => {
            slots[id] = Some(value);
            Ok(())
        }
    }
}

#[derive(Default)]
struct IdMap {
    ids: HashMap<String, usize>,
    names: Vec<String>,
}

impl IdMap {
    fn id(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.ids.insert(name.to_owned(), id);
        self.names.push(name.to_owned());
        id
    }
}

/// Writes `dataset` in the `{-1, +1}` alphabet with a header row.
pub fn write_dataset(dataset: &Dataset, out: impl Write) -> Result<()> {
    write_dataset_with(dataset, Alphabet::PlusMinusOne, out)
}

pub fn write_dataset_with(dataset: &Dataset, alphabet: Alphabet, mut out: impl Write) -> Result<()> {
    if alphabet == Alphabet::ZeroOne {
        writeln!(out, "# alphabet=01")?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["task", "worker", "answer"];
    if dataset.truth_labels.is_some() {
        header.push("truth");
        if dataset.measured_reliabilities.is_some() {
            header.push("reliability");
        }
    }
    w.write_record(&header)?;
    for (e, &(i, u)) in dataset.graph.edges().iter().enumerate() {
        let mut row = vec![
            dataset.task_names[i].clone(),
            dataset.worker_names[u].clone(),
            alphabet.format(dataset.answers.get(e)).to_owned(),
        ];
        if let Some(t) = &dataset.truth_labels {
            row.push(alphabet.format(t[i]).to_owned());
            if let Some(p) = &dataset.measured_reliabilities {
                row.push(p[u].to_string());
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Keeps a uniformly random subset of `min(l_target, degree)` answers per
/// task, drops workers left without answers and compacts worker ids.
pub fn subsample_assignments(dataset: &Dataset, l_target: usize, seed: u64) -> Result<Dataset> {
    if l_target == 0 {
        return Err(crowdbp::Error::Parameter("l_target must be at least 1".into()).into());
    }
    let graph = &dataset.graph;
    let mut rng = rng_from_seed(derive_seed(seed, &[stage::SUBSAMPLE]));
    let mut keep = vec![false; graph.n_edges()];
    for i in 0..graph.n_tasks() {
        let edges = graph.task_edges(i);
        if edges.len() <= l_target {
            edges.iter().for_each(|&e| keep[e] = true);
        } else {
            for k in index::sample(&mut rng, edges.len(), l_target) {
                keep[edges[k]] = true;
            }
        }
    }
    let mut new_worker = vec![usize::MAX; graph.n_workers()];
    let mut worker_names = Vec::new();
    let mut kept_workers = Vec::new();
    let mut edges = Vec::new();
    let mut answers = Vec::new();
    for e in (0..graph.n_edges()).filter(|&e| keep[e]) {
        let (i, u) = graph.edge(e);
        if new_worker[u] == usize::MAX {
            new_worker[u] = worker_names.len();
            worker_names.push(dataset.worker_names[u].clone());
            kept_workers.push(u);
        }
        edges.push((i, new_worker[u]));
        answers.push(dataset.answers.get(e));
    }
    let new_graph = AssignmentGraph::from_edges(graph.n_tasks(), worker_names.len(), edges)?;
    let answers = AnswerMatrix::new(&new_graph, answers)?;
    let measured_reliabilities = dataset
        .measured_reliabilities
        .as_ref()
        .map(|p| kept_workers.iter().map(|&u| p[u]).collect());
    Ok(Dataset {
        graph: new_graph,
        answers,
        truth_labels: dataset.truth_labels.clone(),
        measured_reliabilities,
        task_names: dataset.task_names.clone(),
        worker_names,
    })
}

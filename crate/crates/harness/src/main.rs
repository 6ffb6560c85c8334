use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use crowdbp::graph::{generate_regular_bipartite, sample_answers, sample_ground_truth};
use crowdbp::rng::{derive_seed, stage};
use crowdbp::{EstimatorSpec, ReliabilityPrior};
use crowdbp_harness::dataset::{infer, write_dataset};
use crowdbp_harness::{
    error_rate, load_dataset, run_experiment, subsample_assignments, theoretical_bounds, tree_probability_bound,
    write_metrics, Dataset, ExperimentConfig, Result,
};

#[derive(Parser)]
#[command(name = "crowdbp", version, about = "Belief propagation for crowdsourced binary labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random regular instance and write it as a dataset CSV.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        r: usize,
        /// sh, ash, beta:A,B or atoms:p=w,...
        #[arg(long, default_value = "sh")]
        prior: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate task labels of a dataset.
    Infer {
        #[arg(long)]
        data: PathBuf,
        /// mv, kos, bp, ebpN, oracle-work, oracle-task or em
        #[arg(long)]
        estimator: String,
        /// Prior for bp and oracle-task. Defaults to the empirical
        /// distribution of measured worker reliabilities.
        #[arg(long)]
        prior: Option<String>,
        #[arg(long, default_value_t = 100)]
        kmax: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep at most this many answers per task before inference.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep described by a TOML config and write the metrics CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `threads` in the config.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the error bounds for an (l, r)-regular assignment.
    Bounds {
        #[arg(long)]
        l: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, requires = "k")]
        n: Option<usize>,
        #[arg(long, requires = "n")]
        k: Option<usize>,
    },
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn simulate(n: usize, l: usize, r: usize, prior: &str, seed: u64, out: Option<&PathBuf>) -> Result<()> {
    let prior = ReliabilityPrior::from_str(prior)?;
    let graph = generate_regular_bipartite(n, l, r, derive_seed(seed, &[stage::GRAPH]))?;
    let truth = sample_ground_truth(&graph, &prior, derive_seed(seed, &[stage::TRUTH]));
    let answers = sample_answers(&graph, &truth, derive_seed(seed, &[stage::ANSWERS]))?;
    let dataset = Dataset::new(graph, answers, Some(truth.labels), Some(truth.reliabilities))?;
    write_dataset(&dataset, output(out)?)
}

#[allow(clippy::too_many_arguments)]
fn infer_command(
    data: &PathBuf,
    estimator: &str,
    prior: Option<&str>,
    kmax: usize,
    tol: f64,
    seed: u64,
    subsample: Option<usize>,
    out: Option<&PathBuf>,
) -> Result<()> {
    let spec = EstimatorSpec::from_str(estimator)?.with_iterations(kmax, tol);
    let mut dataset = load_dataset(data)?;
    if let Some(l) = subsample {
        dataset = subsample_assignments(&dataset, l, seed)?;
    }
    let prior = prior.map(ReliabilityPrior::from_str).transpose()?;
    let report = infer(&dataset, &spec, prior.as_ref(), seed)?;
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(["task", "label", "margin"])?;
    for (i, name) in dataset.task_names.iter().enumerate() {
        w.write_record([name.clone(), report.labels[i].as_i8().to_string(), report.margins[i].to_string()])?;
    }
    w.flush()?;
    if let Some(truth) = &dataset.truth_labels {
        eprintln!("error_rate={}", error_rate(&report, truth)?);
    }
    Ok(())
}

fn bench(config: &PathBuf, threads: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let mut config = ExperimentConfig::load(config)?;
    if threads.is_some() {
        config.threads = threads;
    }
    if out.is_some() {
        config.output = out;
    }
    let rows = run_experiment(&config)?;
    write_metrics(&rows, output(config.output.as_ref())?)
}

fn bounds(l: usize, r: usize, mu: f64, q: f64, n: Option<usize>, k: Option<usize>) -> Result<()> {
    let b = theoretical_bounds(l, r, mu, q)?;
    println!("mv_bound={}", b.mv);
    match b.kos {
        Some(v) => println!("kos_bound={v}"),
        None => println!("kos_bound=undefined"),
    }
    if let (Some(n), Some(k)) = (n, k) {
        println!("not_tree_probability={}", tree_probability_bound(n, l, r, k)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            n,
            l,
            r,
            prior,
            seed,
            out,
        } => simulate(n, l, r, &prior, seed, out.as_ref()),
        Command::Infer {
            data,
            estimator,
            prior,
            kmax,
            tol,
            seed,
            subsample,
            out,
        } => infer_command(&data, &estimator, prior.as_deref(), kmax, tol, seed, subsample, out.as_ref()),
        Command::Bench { config, threads, out } => bench(&config, threads, out),
        Command::Bounds { l, r, mu, q, n, k } => bounds(l, r, mu, q, n, k),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

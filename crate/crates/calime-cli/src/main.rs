//! `calime` command-line harness.

use std::path::PathBuf;
use std::process::ExitCode;

use calime::data::PartitionSizes;
use calime::explain::Mode;
use calime::gencda::NoiseMode;
use calime::models::BlackBoxKind;
use calime::pipeline::{self, RunConfig, RunReport};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "calime",
    version,
    about = "Causality-aware local explanations for tabular classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discover the causal graph of the causal partition.
    Discover(RunArgs),
    /// Train the black-box classifier.
    Train(RunArgs),
    /// Explain instances of the explanation partition.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        /// Explain only these source row ids (comma separated).
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<usize>>,
        /// Explain only the first N selected rows.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Explain and evaluate, writing sweeps and the summary table.
    Benchmark(RunArgs),
    /// Recompute metrics for the explanations stored in the output directory.
    Evaluate(RunArgs),
}

/// Flags override the values of the config file.
#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    /// Partition row counts as BLACK_BOX,CAUSAL,EXPLAIN.
    #[arg(long, value_delimiter = ',')]
    partition: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    black_box: Option<BlackBoxKind>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<Mode>>,
    #[arg(short, long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Neighborhood size.
    #[arg(short = 'n', long)]
    n_samples: Option<usize>,
    /// Kernel width.
    #[arg(long)]
    sigma: Option<f64>,
    /// Significance level of the independence tests.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    noise_mode: Option<NoiseMode>,
    #[arg(long)]
    n_instances: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn config(&self) -> calime::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            c.dataset = v.clone();
        }
        if let Some(v) = &self.label {
            c.label_column = Some(v.clone());
        }
        if let Some(v) = &self.partition {
            if v.len() != 3 {
                return Err(calime::Error::Config(
                    "--partition takes three row counts".into(),
                ));
            }
            c.partition = PartitionSizes::Counts {
                black_box: v[0],
                causal: v[1],
                explain: v[2],
            };
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.black_box {
            c.black_box = v;
        }
        if let Some(v) = &self.modes {
            c.modes = v.clone();
        }
        if let Some(v) = &self.k {
            c.k = v.clone();
        }
        if let Some(v) = self.n_samples {
            c.explain.n_samples = v;
        }
        if self.sigma.is_some() {
            c.explain.sigma = self.sigma;
        }
        if let Some(v) = self.alpha {
            c.discovery.alpha = v;
        }
        if let Some(v) = self.noise_mode {
            c.explain.sampler.noise_mode = v;
        }
        if self.n_instances.is_some() {
            c.n_instances = self.n_instances;
        }
        if let Some(v) = &self.output {
            c.output_dir = v.clone();
        }
        if self.cache_dir.is_some() {
            c.cache_dir = self.cache_dir.clone();
        }
        if self.threads.is_some() {
            c.threads = self.threads;
        }
        Ok(c)
    }
}

fn report(r: &RunReport) -> u8 {
    eprintln!(
        "{}/{} instance runs succeeded, outputs in {}",
        r.n_ok,
        r.n_ok + r.failures.len(),
        r.output_dir.display()
    );
    r.exit_code() as u8
}

fn run(cmd: Command) -> calime::Result<u8> {
    match cmd {
        Command::Discover(a) => {
            let cfg = a.config()?;
            let g = pipeline::run_discover(&cfg)?;
            if g.forced_sink {
                log::warn!("no node passed the sink test; the graph contains forced orientations");
            }
            eprintln!(
                "{} nodes, {} edges, written to {}",
                g.n_nodes(),
                g.edges().len(),
                cfg.output_dir.display()
            );
            Ok(0)
        }
        Command::Train(a) => {
            let cfg = a.config()?;
            let m = pipeline::run_train(&cfg)?;
            if m.holdout_accuracy.is_finite() {
                eprintln!("holdout accuracy {:.4}", m.holdout_accuracy);
            }
            Ok(0)
        }
        Command::Explain { run, ids, limit } => {
            let mut cfg = run.config()?;
            if limit.is_some() {
                cfg.n_instances = limit;
            }
            let ids = match (ids, limit) {
                (Some(mut ids), Some(l)) => {
                    ids.truncate(l);
                    Some(ids)
                }
                (ids, _) => ids,
            };
            Ok(report(&pipeline::run_explain(&cfg, ids.as_deref())?))
        }
        Command::Benchmark(a) => Ok(report(&pipeline::run_benchmark(&a.config()?)?)),
        Command::Evaluate(a) => Ok(report(&pipeline::run_evaluate(&a.config()?)?)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

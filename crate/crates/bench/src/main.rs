use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gnn_es_bench::experiment::{run_experiment, Algorithm, ExperimentConfig};
use gnn_es_bench::{curves, summary, BenchError, Result};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "gnn-es-bench", version, about = "Benchmark harness for flow-augmented evolution strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm on one objective over a list of seeds.
    Run(RunArgs),
    /// Rebuild summary.tsv from the trajectory logs in a directory.
    Summarize {
        dir: PathBuf,
    },
    /// Write median/quartile best-so-far curves for the logs in a directory.
    Curves {
        dir: PathBuf,
        /// Output file (default: <dir>/curves.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Every field may also come from the `--config` TOML file; flags win.
#[derive(Args, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RunArgs {
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    algo: Option<String>,
    /// Comma-separated seeds or half-open ranges, e.g. `0..10` or `1,4,7`.
    #[arg(long)]
    seeds: Option<String>,
    /// Objective evaluations per seed.
    #[arg(long)]
    budget: Option<u64>,
    /// Population size (default 10·dim).
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    kl_radius: Option<f64>,
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Learning rate of the pges baseline (default 1e-3; it works on raw f).
    #[arg(long)]
    pges_lr: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

impl RunArgs {
    /// Fills fields left unset on the command line from `file`.
    fn or(self, file: RunArgs) -> RunArgs {
        RunArgs {
            objective: self.objective.or(file.objective),
            dim: self.dim.or(file.dim),
            algo: self.algo.or(file.algo),
            seeds: self.seeds.or(file.seeds),
            budget: self.budget.or(file.budget),
            pop: self.pop.or(file.pop),
            kl_radius: self.kl_radius.or(file.kl_radius),
            inner_steps: self.inner_steps.or(file.inner_steps),
            pges_lr: self.pges_lr.or(file.pges_lr),
            out: self.out.or(file.out),
            config: self.config,
        }
    }

    fn into_config(self) -> Result<ExperimentConfig> {
        let args = match &self.config {
            Some(path) => {
                let file = load_config(path)?;
                self.or(file)
            }
            None => self,
        };
        let objective = required(args.objective, "objective")?
            .parse()
            .map_err(|e: gnn_es::Error| BenchError::Usage(e.to_string()))?;
        Ok(ExperimentConfig {
            objective,
            dim: required(args.dim, "dim")?,
            algorithm: required(args.algo, "algo")?.parse::<Algorithm>()?,
            seeds: parse_seeds(&args.seeds.unwrap_or_else(|| "0".into()))?,
            budget: required(args.budget, "budget")?,
            population: args.pop,
            kl_radius: args.kl_radius,
            inner_steps: args.inner_steps,
            pges_learning_rate: args.pges_lr.unwrap_or(1e-3),
            out: args.out.unwrap_or_else(|| PathBuf::from("results")),
        })
    }
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| BenchError::Usage(format!("missing --{name}")))
}

fn load_config(path: &Path) -> Result<RunArgs> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.into(), source })?;
    toml::from_str(&text).map_err(|source| BenchError::Config { path: path.into(), source })
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || BenchError::Usage(format!("invalid seed list `{spec}`"));
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                seeds.extend(a..b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.into_config()?;
            let output = run_experiment(&cfg)?;
            let row = output.summary;
            println!(
                "{} d={} {}: mean best f {:.6e} ± {:.2e} over {} seeds ({} evaluations)",
                row.objective, row.dim, row.algorithm, row.mean_best_f, row.std_error, row.seeds, row.evaluations
            );
        }
        Command::Summarize { dir } => {
            let rows = summary::summarize_dir(&dir)?;
            print!("{}", summary::render(&rows));
        }
        Command::Curves { dir, out } => {
            let curves = curves::emit_curves(&dir, out.as_deref())?;
            eprintln!("wrote {} curves", curves.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                BenchError::Usage(_) | BenchError::Config { .. } => ExitCode::from(2),
                BenchError::Core(gnn_es::Error::InvalidConfig(_) | gnn_es::Error::UnknownObjective(_)) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}

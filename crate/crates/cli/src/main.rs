use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tracing_subscriber::EnvFilter;

use crowdtruth::auction::{outcome, CoverageProblem};
use crowdtruth::engine::{run_date, run_ed, run_mv_with, run_nc};
use crowdtruth::harness::experiment::{summarize, write_csv};
use crowdtruth::harness::probe::linear_grid;
use crowdtruth::harness::{fixtures, run_experiment, truthfulness_probe, SweepSpec};
use crowdtruth::model::observation_matrix_csv;
use crowdtruth::{AccuracyMatrix, AccuracyScope, Error, Instance, Params, Similarity, WorkerId};

/// Verbosity filter, e.g. `CROWDTRUTH_LOG=debug`.
const LOG_ENV: &str = "CROWDTRUTH_LOG";

#[derive(Parser)]
#[command(name = "crowdtruth", version, about = "Copier-aware truth discovery and reverse auctions for crowdsourcing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate truths and worker accuracies from an instance file.
    Discover {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = TruthAlgo::Date)]
        algo: TruthAlgo,
        /// Prior probability that a pair of workers is dependent.
        #[arg(long)]
        alpha: Option<f64>,
        /// Initial accuracy of every worker.
        #[arg(long)]
        eps: Option<f64>,
        /// Probability that a copier copies any given value.
        #[arg(long)]
        r: Option<f64>,
        /// Iteration cap.
        #[arg(long)]
        phi: Option<usize>,
        /// Weight of similar values in the support counts.
        #[arg(long)]
        rho: Option<f64>,
        /// Value similarity: `exact` or `edit`.
        #[arg(long)]
        sim: Option<String>,
        /// Average accuracy per task or over all of a worker's values.
        #[arg(long, value_enum)]
        accuracy_scope: Option<Scope>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Select winners and payments given an instance and worker accuracies.
    Auction {
        instance: PathBuf,
        /// `discover` output or a bare worker → task → accuracy map.
        accuracy: PathBuf,
        #[arg(long, value_enum, default_value_t = AuctionAlgo::Ra)]
        algo: AuctionAlgo,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Utility of one worker over a grid of bids, as CSV.
    Probe {
        instance: PathBuf,
        accuracy: PathBuf,
        #[arg(long)]
        worker: String,
        /// `low:high:count` multiples of the worker's true cost.
        #[arg(long, default_value = "0.5:1.5:21")]
        grid: String,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep spec and write per-replication metrics as CSV.
    Simulate {
        spec: PathBuf,
        /// Replications per cell, overriding the spec.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write mean and standard deviation per cell and algorithm.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Print a built-in instance as JSON.
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
    },
    /// Export an instance's observations as a worker × task CSV.
    Matrix {
        instance: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TruthAlgo {
    Date,
    Mv,
    Nc,
    Ed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    PerTask,
    Pooled,
}

#[derive(Clone, Copy, ValueEnum)]
enum AuctionAlgo {
    Ra,
    Ga,
    Gb,
    Opt,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureName {
    Table1,
    Auction,
}

#[derive(Serialize)]
struct Selection {
    algorithm: &'static str,
    winners: Vec<WorkerId>,
    social_cost: f64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InfeasibleCoverage(_) | Error::InsufficientCompetition(_) => 3,
        Error::OracleTooLarge { .. } | Error::EnumerationTooLarge { .. } => 4,
        Error::Inconsistent(_) => 1,
        _ => 2,
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_accuracy(path: &Path) -> Result<AccuracyMatrix, Error> {
    let mut value: serde_json::Value = serde_json::from_reader(io::BufReader::new(File::open(path)?))?;
    if let Some(inner) = value.get_mut("accuracy") {
        value = inner.take();
    }
    Ok(serde_json::from_value(value)?)
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::InvalidConfig(format!("grid `{spec}` is not low:high:count"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [low, high, count] = parts.as_slice() else {
        return Err(bad());
    };
    Ok(linear_grid(
        low.parse().map_err(|_| bad())?,
        high.parse().map_err(|_| bad())?,
        count.parse().map_err(|_| bad())?,
    ))
}

#[allow(clippy::too_many_arguments)]
fn discover(
    instance: &Path,
    algo: TruthAlgo,
    alpha: Option<f64>,
    eps: Option<f64>,
    r: Option<f64>,
    phi: Option<usize>,
    rho: Option<f64>,
    sim: Option<&str>,
    scope: Option<Scope>,
    out: Option<&Path>,
) -> Result<(), Error> {
    let inst = Instance::from_path(instance)?;
    let mut params = Params::default();
    params.alpha = alpha.unwrap_or(params.alpha);
    params.init_accuracy = eps.unwrap_or(params.init_accuracy);
    params.copy_prob = r.unwrap_or(params.copy_prob);
    params.max_iters = phi.unwrap_or(params.max_iters);
    params.rho = rho.unwrap_or(params.rho);
    if let Some(name) = sim {
        params.similarity = Similarity::from_name(name)?;
    }
    if let Some(scope) = scope {
        params.accuracy_scope = match scope {
            Scope::PerTask => AccuracyScope::PerTask,
            Scope::Pooled => AccuracyScope::Pooled,
        };
    }
    params.validate()?;
    let result = match algo {
        TruthAlgo::Date => run_date(&inst, &params)?,
        TruthAlgo::Nc => run_nc(&inst, &params)?,
        TruthAlgo::Ed => run_ed(&inst, &params)?,
        TruthAlgo::Mv => {
            let truth = run_mv_with(&inst, &params.similarity, params.rho)?;
            return emit_json(&serde_json::json!({ "truth": truth }), out);
        }
    };
    tracing::info!(iterations = result.iterations, converged = result.converged, "truth discovery finished");
    emit_json(&result, out)
}

fn auction(instance: &Path, accuracy: &Path, algo: AuctionAlgo, out: Option<&Path>) -> Result<(), Error> {
    let inst = Instance::from_path(instance)?;
    let acc = read_accuracy(accuracy)?;
    let problem = CoverageProblem::new(&inst, &acc)?;
    let (name, winners) = match algo {
        AuctionAlgo::Ra => return emit_json(&outcome(&problem)?, out),
        AuctionAlgo::Ga => ("GA", problem.greedy_accuracy()?),
        AuctionAlgo::Gb => ("GB", problem.greedy_bid()?),
        AuctionAlgo::Opt => ("OPT", problem.brute_force_opt()?.1),
    };
    let selection = Selection {
        algorithm: name,
        social_cost: problem.social_cost(&winners),
        winners: winners.iter().map(|&w| problem.workers[w].clone()).collect(),
    };
    emit_json(&selection, out)
}

fn probe(instance: &Path, accuracy: &Path, worker: &str, grid: &str, out: Option<&Path>) -> Result<(), Error> {
    let inst = Instance::from_path(instance)?;
    let problem = CoverageProblem::new(&inst, &read_accuracy(accuracy)?)?;
    let curve = truthfulness_probe(&problem, &WorkerId::from(worker), &parse_grid(grid)?)?;
    tracing::info!(best_bid = curve.best_bid, gain = curve.max_gain(), "probe finished");
    write_csv(&curve.points, sink(out)?)
}

fn simulate(spec: &Path, seeds: Option<u64>, out: Option<&Path>, summary: Option<&Path>) -> Result<(), Error> {
    let mut spec = SweepSpec::from_json_str(&std::fs::read_to_string(spec)?)?;
    if let Some(k) = seeds {
        spec.seeds = k;
    }
    let rows = run_experiment(&spec)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        tracing::warn!(failed, "some replications ended in an error row");
    }
    write_csv(&rows, sink(out)?)?;
    if let Some(path) = summary {
        write_csv(&summarize(&rows), File::create(path)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Discover {
            instance,
            algo,
            alpha,
            eps,
            r,
            phi,
            rho,
            sim,
            accuracy_scope,
            out,
        } => discover(
            &instance,
            algo,
            alpha,
            eps,
            r,
            phi,
            rho,
            sim.as_deref(),
            accuracy_scope,
            out.as_deref(),
        ),
        Command::Auction {
            instance,
            accuracy,
            algo,
            out,
        } => auction(&instance, &accuracy, algo, out.as_deref()),
        Command::Probe {
            instance,
            accuracy,
            worker,
            grid,
            out,
        } => probe(&instance, &accuracy, &worker, &grid, out.as_deref()),
        Command::Simulate {
            spec,
            seeds,
            out,
            summary,
        } => simulate(&spec, seeds, out.as_deref(), summary.as_deref()),
        Command::Fixture { name } => {
            let inst = match name {
                FixtureName::Table1 => fixtures::table1(),
                FixtureName::Auction => fixtures::auction_fixture().0,
            };
            emit_json(&inst, None)
        }
        Command::Matrix { instance, out } => {
            let csv = observation_matrix_csv(&Instance::from_path(instance)?)?;
            let mut w = sink(out.as_deref())?;
            w.write_all(csv.as_bytes())?;
            w.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env(LOG_ENV).unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

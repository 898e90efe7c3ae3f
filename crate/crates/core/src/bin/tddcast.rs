use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tddcast::baselines::{GammaMode, TddReading};
use tddcast::cli::{self, OptimizeMethod, SweepMethod, SweepSpec, SweepVar};
use tddcast::model::ConfigMap;
use tddcast::{markov, Error, Policy, Result, SystemParams};

/// Network-coded broadcast over TDD erasure channels: analysis, burst
/// optimization, bounds, simulation and baseline comparison.
#[derive(Parser, Debug)]
#[command(name = "tddcast", version)]
struct Args {
    /// Parameter file (`key = value` lines). Without it the built-in
    /// two-receiver GEO satellite example is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a parameter, e.g. `--set pe=0.3 --set pe_ack[2]=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean completion time of a burst table.
    Analyze {
        #[arg(long)]
        policy: PathBuf,
        /// Also print the expected time from every transient state.
        #[arg(long)]
        per_state: bool,
        /// Write the transition matrix as CSV.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Compute a burst table and write it as a look-up table file.
    Optimize {
        #[arg(long, default_value = "exact")]
        method: OptimizeMethod,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate several schemes across a range of erasure probabilities.
    Sweep {
        #[arg(long, default_value = "pe")]
        param: SweepVar,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        #[arg(long, default_value_t = 0.8)]
        stop: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Comma-separated: optimal, worst_link, combined, rr_full_duplex,
        /// rr_tdd, simulate.
        #[arg(long, value_delimiter = ',', default_value = "optimal,worst_link,combined")]
        methods: Vec<SweepMethod>,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        ideal_field: bool,
        /// Pass count charged to TDD Round-Robin: first-pass or literal.
        #[arg(long, default_value = "first-pass")]
        rr_tdd_reading: TddReading,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stopping-count bound for completing with probability 1 - epsilon.
    Bound {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
    },
    /// Monte Carlo batch against the analytic mean.
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        ideal_field: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coding schemes versus Round-Robin baselines.
    Compare {
        #[arg(long, default_value = "both")]
        gamma: GammaMode,
        /// Pass count charged to TDD Round-Robin: first-pass or literal.
        #[arg(long, default_value = "first-pass")]
        rr_tdd_reading: TddReading,
    },
}

fn load_params(args: &Args) -> Result<SystemParams> {
    let mut map = match &args.config {
        Some(path) => ConfigMap::parse(&fs::read_to_string(path)?)?,
        None => ConfigMap::parse(&SystemParams::satellite_example(0.5).to_config_string())?,
    };
    map.apply_overrides(args.overrides.iter().map(String::as_str))?;
    map.build()
}

fn load_policy(path: &Path) -> Result<Policy> {
    Policy::read_table(BufReader::new(fs::File::open(path)?))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: &Args) -> Result<()> {
    let params = load_params(args)?;
    match &args.command {
        Command::Analyze { policy, per_state, dump_matrix } => {
            let pol = load_policy(policy)?;
            print!("{}", cli::cmd_analyze(&params, &pol, *per_state)?);
            if let Some(path) = dump_matrix {
                markov::build_matrix(&pol, &params)?.write_csv(fs::File::create(path)?)?;
            }
        }
        Command::Optimize { method, out } => {
            let report = cli::cmd_optimize(&params, *method)?;
            print!("{}", report.render());
            if let Some(path) = out {
                fs::write(path, report.policy.to_string())?;
            } else {
                print!("{}", report.policy);
            }
        }
        Command::Sweep { param, start, stop, step, methods, runs, seed, ideal_field, rr_tdd_reading, out } => {
            if methods.contains(&SweepMethod::Simulate) {
                eprintln!("seed: {seed}");
            }
            let spec = SweepSpec {
                base: params,
                variable: *param,
                start: *start,
                stop: *stop,
                step: *step,
                methods: methods.clone(),
                sim_runs: *runs,
                seed: *seed,
                ideal_field: *ideal_field,
                tdd_reading: *rr_tdd_reading,
            };
            emit(&cli::cmd_sweep(&spec)?, out.as_deref())?;
        }
        Command::Bound { policy, epsilon } => {
            print!("{}", cli::cmd_bound(&params, &load_policy(policy)?, *epsilon)?);
        }
        Command::Simulate { policy, runs, seed, ideal_field, out } => {
            eprintln!("seed: {seed}");
            let report = cli::cmd_simulate(&params, &load_policy(policy)?, *runs, *seed, *ideal_field)?;
            for (run, e) in &report.failed {
                eprintln!("run {run}: {e}");
            }
            emit(&report.csv()?, out.as_deref())?;
            eprintln!("{}", report.comparison_line());
        }
        Command::Compare { gamma, rr_tdd_reading } => {
            print!("{}", cli::cmd_compare(&params, *gamma, *rr_tdd_reading)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Parse { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

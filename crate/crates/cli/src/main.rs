//! Command-line front end: ingest -> fit -> solve -> report, plus scenario
//! generators and MILP export.
//!
//! Exit codes: 0 on success (feasible solve), 2 when the solve is
//! infeasible, 1 on usage or data errors.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use run::{CommonInputs, GenRandomInputs, Settings, SolveInputs};

#[derive(Parser)]
#[command(
    name = "remedia",
    version,
    about = "Fit interference-aware outcome models and search for budgeted interventions \
             that reduce between-group disparity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// sets.csv path (header: id,lat,lon,counselors,offers_ap,offers_calc)
    #[arg(long)]
    sets: Option<PathBuf>,
    /// slices.csv path (header: set_id,group,count,outcome_rate)
    #[arg(long)]
    slices: Option<PathBuf>,
    /// Optional weights.csv path (header: set_id,group,weight)
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Config file (TOML); flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Neighborhood size K (default 5)
    #[arg(long)]
    neighbor_k: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Saved model file to use instead of refitting
    #[arg(long)]
    model: Option<PathBuf>,
    /// across-pairwise | within-pairwise | threshold-within | threshold-across | aggregate
    #[arg(long)]
    objective: Option<String>,
    /// Threshold for threshold objectives
    #[arg(long)]
    kappa: Option<f64>,
    /// Maximum number of interventions
    #[arg(long)]
    budget: Option<usize>,
    /// enumerate | bnb | local
    #[arg(long)]
    solver: Option<String>,
    /// Seed for the local-search solver
    #[arg(long)]
    seed: Option<u64>,
    /// ir | dip
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Adds a no-harm-across constraint with this floor
    #[arg(long)]
    eta: Option<f64>,
    /// Adds a counterfactual-privilege constraint with this cap
    #[arg(long)]
    tau: Option<f64>,
    /// Count ordered group pairs (doubles pairwise disparities)
    #[arg(long)]
    ordered_pairs: bool,
    /// Weight fit observations by cell counts
    #[arg(long)]
    weighted_fit: bool,
    /// Candidate cap for the enumeration solver
    #[arg(long)]
    enumeration_limit: Option<u128>,
    /// Extra random restarts for local search
    #[arg(long)]
    restarts: Option<usize>,
    /// Comma-separated compare variants (compare command only)
    #[arg(long)]
    variants: Option<String>,
}

#[derive(Args)]
struct GenRandomArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of intervention sets
    #[arg(long, default_value_t = 12)]
    m: usize,
    /// Number of groups
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 5)]
    neighbor_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate scenario files, printing totals
    Validate(SolveArgs),
    /// Fit the structural model and write model.txt
    Fit(SolveArgs),
    /// Solve for the optimal intervention vector and write artifacts
    Solve(SolveArgs),
    /// Solve several objective variants and write a comparison table
    Compare(SolveArgs),
    /// Write the two-university example scenario
    GenToy {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded random scenario with a known generating model
    GenRandom(GenRandomArgs),
    /// Export the optimization program in CPLEX LP format
    ExportMilp {
        #[command(flatten)]
        args: SolveArgs,
        /// Output .lp file path
        #[arg(long)]
        lp_out: PathBuf,
    },
}

fn solve_inputs(args: &SolveArgs) -> SolveInputs {
    SolveInputs {
        common: CommonInputs {
            sets: args.common.sets.clone(),
            slices: args.common.slices.clone(),
            weights: args.common.weights.clone(),
            neighbor_k: args.common.neighbor_k,
            config: args.common.config.clone(),
        },
        model: args.model.clone(),
        objective: args.objective.clone(),
        kappa: args.kappa,
        budget: args.budget,
        solver: args.solver.clone(),
        seed: args.seed,
        mode: args.mode.clone(),
        out: args.out.clone(),
        eta: args.eta,
        tau: args.tau,
        ordered_pairs: args.ordered_pairs,
        weighted_fit: args.weighted_fit,
        enumeration_limit: args.enumeration_limit,
        restarts: args.restarts,
        variants: args.variants.clone(),
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Validate(args) => run::cmd_validate(&Settings::merge(&solve_inputs(&args))?),
        Command::Fit(args) => run::cmd_fit(&Settings::merge(&solve_inputs(&args))?),
        Command::Solve(args) => run::cmd_solve(&Settings::merge(&solve_inputs(&args))?),
        Command::Compare(args) => run::cmd_compare(&Settings::merge(&solve_inputs(&args))?),
        Command::GenToy { out } => run::cmd_gen_toy(&out),
        Command::GenRandom(args) => run::cmd_gen_random(&GenRandomInputs {
            seed: args.seed,
            m: args.m,
            r: args.r,
            noise_sd: args.noise_sd,
            neighbor_k: args.neighbor_k,
            out: args.out,
        }),
        Command::ExportMilp { args, lp_out } => {
            run::cmd_export_milp(&Settings::merge(&solve_inputs(&args))?, &lp_out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hiopf::config::{Overrides, RunConfig, Scheme};
use hiopf::pipeline::{cmd_coarsen, cmd_compare, cmd_partition, cmd_solve};
use hiopf::CliError;

/// Centralized, decentralized (ADMM) and hierarchical AC-OPF runs.
#[derive(Parser)]
#[command(name = "hiopf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and write report.json and trace.csv.
    Solve(RunArgs),
    /// Run several schemes on the same setup and compare them.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "centralized,decentralized,hierarchical")]
        schemes: Vec<Scheme>,
    },
    /// Partition the network and write partition.txt.
    Partition(RunArgs),
    /// Build the coarse network and write it with the node map.
    Coarsen(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Case file (MATPOWER .m or JSON).
    #[arg(long)]
    case: Option<PathBuf>,
    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    #[arg(short = 'K', long)]
    partitions: Option<usize>,
    #[arg(long)]
    subparts_per_partition: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eps_abs: Option<f64>,
    #[arg(long)]
    eps_rel: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    slack_cost: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = self.config.as_deref().map(Overrides::from_file).transpose()?;
        let flags = Overrides {
            case: self.case.clone(),
            scheme: self.scheme,
            partitions: self.partitions,
            subparts_per_partition: self.subparts_per_partition,
            rho: self.rho,
            eps_abs: self.eps_abs,
            eps_rel: self.eps_rel,
            max_steps: self.max_steps,
            seed: self.seed,
            workers: self.workers,
            slack_cost: self.slack_cost,
            out: self.out.clone(),
            ..Overrides::default()
        };
        RunConfig::resolve(file.as_ref(), &flags)
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Solve(args) => {
            let report = cmd_solve(&args.resolve()?)?;
            println!(
                "{} {} steps {} objective {:.6}",
                report.config.scheme.name(),
                report.status,
                report.steps,
                report.objective
            );
            Ok(if report.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Compare { run, schemes } => {
            let cmp = cmd_compare(&run.resolve()?, &schemes)?;
            print!("{}", cmp.table());
            let all = cmp.runs.iter().all(|r| r.report.as_ref().is_some_and(|r| r.converged));
            Ok(match (cmp.complete, all) {
                (false, _) => ExitCode::from(1),
                (true, true) => ExitCode::SUCCESS,
                (true, false) => ExitCode::from(2),
            })
        }
        Command::Partition(args) => {
            println!("{}", cmd_partition(&args.resolve()?)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Coarsen(args) => {
            println!("{}", cmd_coarsen(&args.resolve()?)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HIOPF_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

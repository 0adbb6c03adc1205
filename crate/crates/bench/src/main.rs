use std::path::PathBuf;
use std::process::ExitCode;

use bench::generate::{cmd_generate, parse_sizes};
use bench::report::cmd_report;
use bench::run::{cmd_run, plan, run_file_stem, RunOptions};
use bench::suite::Suite;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bench", about = "Generate knapsack suites, run GEO and baselines, aggregate results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one instance JSON per size.
    Generate {
        /// Comma-separated `NxM` sizes (objects x knapsacks), e.g. `7x2,8x5`.
        #[arg(long, default_value = "")]
        sizes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Largest search space solved exhaustively for the reference optimum.
        #[arg(long, env = "BENCH_ORACLE_BUDGET")]
        oracle_budget: Option<u64>,
    },
    /// Execute a suite file.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "BENCH_WORKERS")]
        workers: Option<usize>,
        #[arg(long, env = "BENCH_ORACLE_BUDGET")]
        oracle_budget: Option<u64>,
        /// Print the run matrix without executing it.
        #[arg(long)]
        dry_run: bool,
    },
    /// Aggregate a results directory into best-config and heatmap tables.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> bench::error::Result<()> {
    match cli.command {
        Command::Generate { sizes, seed, out, oracle_budget } => {
            let sizes = parse_sizes(&sizes)?;
            let budget = oracle_budget.unwrap_or(tngeo::knapsack::DEFAULT_ORACLE_BUDGET);
            for path in cmd_generate(&sizes, seed, budget, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Run { suite, out, workers, oracle_budget, dry_run } => {
            let s = Suite::load(&suite)?;
            let opts = RunOptions::resolve(&s, workers, oracle_budget, dry_run);
            if dry_run {
                let labels: Vec<String> = s
                    .instances
                    .iter()
                    .map(|p| p.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default())
                    .collect();
                let cells = s.grid.cells();
                for job in plan(&s) {
                    let c = &cells[job.cell];
                    println!(
                        "{} selection={} chi={} n_epochs={} alpha={} beta={} seed={}",
                        run_file_stem(&labels[job.instance], &job),
                        c.selection.name(),
                        c.chi,
                        c.n_epochs,
                        c.alpha,
                        c.beta,
                        job.seed
                    );
                }
                return Ok(());
            }
            let report = cmd_run(&s, &out, &opts)?;
            let failed = report.rows.iter().filter(|r| r.status != "completed").count();
            eprintln!("{} runs written to {} ({failed} failed)", report.rows.len(), out.display());
        }
        Command::Report { results, out } => {
            let (best, heat) = cmd_report(&results, &out)?;
            eprintln!("{} best-config rows, {} heatmap cells written to {}", best.len(), heat.len(), out.display());
        }
    }
    Ok(())
}

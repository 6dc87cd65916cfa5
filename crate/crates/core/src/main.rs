use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wealthsim::config::{Config, Experiment, Overrides};
use wealthsim::runner::{run, write_outputs, RunError};

#[derive(Parser)]
#[command(name = "wealthsim", version, about = "Wealth exchange simulations and verification runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, summary.json and histogram.csv.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Output directory (default: the config's `output`, else ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config and print the resolved settings.
    Validate { config: PathBuf },
    /// List the experiment kinds.
    List,
}

fn execute(command: Command) -> Result<bool, RunError> {
    match command {
        Command::List => {
            for e in Experiment::ALL {
                println!("{:<18} {}", e.name(), e.description());
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let resolved = Config::load(&config)?.resolve()?;
            println!("ok");
            print!("{}", resolved.describe());
            Ok(true)
        }
        Command::Run {
            config,
            seed,
            trials,
            out,
            threads,
        } => {
            let mut cfg = Config::load(&config)?;
            cfg.apply(&Overrides {
                seed,
                trials,
                output: out.map(|p| p.display().to_string()),
            });
            let resolved = cfg.resolve()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .expect("thread pool");
            let report = pool.install(|| run(&resolved))?;
            write_outputs(&report, resolved.output.as_ref())?;
            let failed = report.rows.iter().filter(|r| !r.pass).count();
            println!(
                "{}: {} checks, {} failed -> {}",
                report.experiment,
                report.rows.len(),
                failed,
                resolved.output
            );
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

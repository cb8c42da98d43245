use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use seqmult::simlab::TableId;
use seqmult_cli::commands::{self, Context};
use seqmult_cli::config::{Mode, RunConfig};
use seqmult_cli::CliResult;

#[derive(Parser)]
#[command(name = "seqmult", version, about = "Sequential forecasting and race calling for batched multinomial counts")]
struct Cli {
    /// Random seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, env = "SEQMULT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a rounds file and its ground truth from the config's `dgp` section.
    Simulate,
    /// Fit the model to the first rounds of a file and summarize the posterior.
    Fit {
        rounds: PathBuf,
        #[arg(long)]
        upto: Option<usize>,
    },
    /// Run the decision rule after every round up to `--upto`.
    Call {
        rounds: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Category tracked in share mode (0-based).
        #[arg(long)]
        category: Option<usize>,
        #[arg(long)]
        upto: Option<usize>,
    },
    /// Rerun a simulation table at desk scale.
    Replicate {
        /// 1, 2, 3, B1, B2 or B3.
        #[arg(long)]
        table: TableId,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        /// Multiplies every batch size.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
}

fn print<T: Serialize>(value: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    // a closed pipe (`| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Context { config, seed, out: cli.out };
    match cli.command {
        Command::Simulate => print(&commands::simulate(&ctx)?.1),
        Command::Fit { rounds, upto } => print(&commands::fit(&ctx, &rounds, upto)?),
        Command::Call { rounds, mode, category, upto } => {
            print(&commands::call(&ctx, &rounds, mode, category, upto)?)
        }
        Command::Replicate { table, reps, scale } => {
            if reps < 30 {
                eprintln!(
                    "warning: {reps} replicates; percentages carry standard errors up to {:.1} points",
                    commands::worst_case_se_pct(reps)
                );
            }
            print(&commands::replicate(&ctx, table, reps, scale)?)
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

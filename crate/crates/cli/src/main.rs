use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irt_partition_cli::{CliResult, Pipeline, RunConfig};

/// IRT-guided train/test partitioning of tabular classification datasets.
#[derive(Parser)]
#[command(name = "irt-partition", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the learner zoo per fold and write the response matrix.
    Matrix(RunArgs),
    /// Calibrate 3PL item parameters per fold (builds the matrix if missing).
    Calibrate(RunArgs),
    /// Build partitions, tune and score every family, run Friedman/Nemenyi.
    Evaluate(RunArgs),
    /// Write plot-ready CSVs from an existing report.
    Plotdata(RunArgs),
    /// All stages in order.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Never touch the network; datasets must be cached.
    #[arg(long)]
    offline: bool,
}

fn execute(command: Command) -> CliResult<()> {
    let (args, stage): (RunArgs, fn(&mut Pipeline) -> CliResult<()>) = match command {
        Command::Matrix(a) => (a, |p| p.matrix().map(drop)),
        Command::Calibrate(a) => (a, |p| {
            let s = p.calibrate()?;
            println!(
                "mean discrimination {:.4}, difficulty {:.4}, guessing {:.4} over {} items",
                s.means.discrimination, s.means.difficulty, s.means.guessing, s.n_items
            );
            Ok(())
        }),
        Command::Evaluate(a) => (a, |p| {
            let r = p.evaluate()?;
            match &r.tests {
                Some(t) => println!("Friedman on test F1: statistic {:.4}, p {:.4e}", t.friedman_statistic, t.friedman_p),
                None => println!("statistical tests skipped"),
            }
            Ok(())
        }),
        Command::Plotdata(a) => (a, |p| {
            for path in p.plotdata()? {
                println!("{}", path.display());
            }
            Ok(())
        }),
        Command::Run(a) => (a, Pipeline::run_all),
    };
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    let mut pipeline = Pipeline::open(config, args.offline)?;
    stage(&mut pipeline)?;
    println!("artifacts in {}", pipeline.out_dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

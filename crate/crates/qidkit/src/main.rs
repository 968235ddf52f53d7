//! Command-line entry point: identification runs, Monte Carlo sweeps, and
//! figure-data extraction over flat JSON/CSV artifacts.

use clap::{Parser, Subcommand, ValueEnum};
use qidkit::estimator::Mode;
use qidkit::pipeline::{cmd_figures, cmd_identify, cmd_sweep, print_identify_summary};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "qidkit",
    version,
    about = "Identify a qubit Hamiltonian from sigma-z shot statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    /// Infinite-shot, noise-free data.
    Exact,
    /// Finite shots with readout flips.
    Sampled,
}

impl From<CliMode> for Mode {
    fn from(mode: CliMode) -> Mode {
        match mode {
            CliMode::Exact => Mode::Exact,
            CliMode::Sampled => Mode::Sampled,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one full identification and write report.json.
    Identify {
        /// Path to the run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (falls back to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's data mode.
        #[arg(long, value_enum)]
        mode: Option<CliMode>,
        /// Override the config's shot-noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write raw.json with every scan (needed by `figures`).
        #[arg(long)]
        keep_raw: bool,
    },
    /// Run every (seed, shots, eta) combination and write sweep.csv.
    Sweep {
        /// Path to the run configuration (JSON) with a sweep section.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (falls back to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract figure-ready CSVs from a completed identify run.
    Figures {
        /// Directory of an identify run made with --keep-raw.
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Identify {
            config,
            out,
            mode,
            seed,
            keep_raw,
        } => cmd_identify(
            &config,
            out.as_deref(),
            mode.map(Mode::from),
            seed,
            keep_raw,
        )
        .map(|report| {
            let dir = out
                .or_else(|| report.config.out_dir.clone())
                .unwrap_or_default();
            print_identify_summary(&report, &dir);
        }),
        Command::Sweep { config, out } => cmd_sweep(&config, out.as_deref()).map(|path| {
            println!("wrote {}", path.display());
        }),
        Command::Figures { run } => cmd_figures(&run).map(|()| {
            println!("wrote figure CSVs to {}", run.display());
        }),
    };
    if let Err(error) = result {
        eprintln!("error: {error}");
        let mut source = std::error::Error::source(&error);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        std::process::exit(error.exit_code());
    }
}

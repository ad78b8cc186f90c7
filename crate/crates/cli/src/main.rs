use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wat_cli::report::Format;
use wat_cli::{audit, golden, report, run_dir, sweep, CliError, ExperimentConfig, ExperimentRecord, RUNS_DIR_ENV};

#[derive(Parser)]
#[command(name = "wat", version, about = "Worst-class adversarial training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured method over every seed.
    Run {
        config: PathBuf,
        /// Directory holding run directories.
        #[arg(long, env = RUNS_DIR_ENV)]
        runs_dir: Option<PathBuf>,
        /// Exact output directory (overrides the runs directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run WAT once per η with shared data and seeds.
    SweepEta {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        etas: Option<Vec<f64>>,
        #[arg(long, env = RUNS_DIR_ENV)]
        runs_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render tables from a stored run.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Re-run the no-regret auditors on a stored run.
    Audit { run_dir: PathBuf },
    /// Recompute every published ρ from its accuracies and diff.
    GoldenRho,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, runs_dir, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| run_dir(runs_dir, &cfg.name));
            let record = wat_cli::run_experiment(&cfg, &dir)?;
            println!("{}", report::markdown(&record));
            println!("wrote {}", dir.display());
            if record.status != "ok" {
                return Err(CliError::Runtime(record.error.unwrap_or_else(|| "run failed".into())));
            }
        }
        Command::SweepEta {
            config,
            etas,
            runs_dir,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let etas = etas.unwrap_or_else(|| sweep::DEFAULT_ETAS.to_vec());
            let dir = out.unwrap_or_else(|| run_dir(runs_dir, &format!("{}-sweep", cfg.name)));
            let rec = sweep::sweep_eta(&cfg, &etas)?;
            sweep::write_sweep(&rec, &dir)?;
            println!("{}", sweep::sweep_markdown(&rec));
            println!("wrote {}", dir.display());
        }
        Command::Report { run_dir, format } => {
            let path = report::emit_report(&run_dir, format)?;
            println!("wrote {}", path.display());
        }
        Command::Audit { run_dir } => {
            let record = ExperimentRecord::load(&run_dir)?;
            let lines = audit::audit_record(&record)?;
            print!("{}", audit::render(&lines));
            if lines.iter().any(|l| !l.ok()) {
                return Err(CliError::Runtime("audit found violations".into()));
            }
        }
        Command::GoldenRho => {
            let checks = golden::golden_rho();
            print!("{}", golden::render_diff(&checks));
            if checks.iter().any(|c| !c.matches) {
                return Err(CliError::Runtime("printed ρ values disagree with their accuracies".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

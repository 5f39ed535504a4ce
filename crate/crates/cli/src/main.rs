use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kpo_cli::{run_estimate, run_oracle, run_sweep, run_validate, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "kpoqa", version, about = "Spectroscopic adiabaticity analysis of Kerr parametric oscillator annealing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact spectrum, gap, transition element and metric.
    Oracle(Common),
    /// Drive-frequency by dwell-time sweep with its spectrum.
    Sweep(Common),
    /// Sweep plus spectroscopic estimate of the metric.
    Estimate(Common),
    /// Hermiticity, parity, conservation and convergence checks.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON), or a metadata file from a previous run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; overrides the config value.
    #[arg(long)]
    threads: Option<usize>,
}

fn run(command: Command) -> Result<String, CliError> {
    let (Command::Oracle(c) | Command::Sweep(c) | Command::Estimate(c) | Command::Validate(c)) = &command;
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    let out = &c.out;
    Ok(match &command {
        Command::Oracle(_) => {
            let s = run_oracle(&cfg, out)?;
            format!("level {} gap {:.6} element {:.6} value_exact {:.6}", s.level, s.gap, s.transition_element, s.value_exact)
        }
        Command::Sweep(_) => {
            let r = run_sweep(&cfg, out)?;
            format!("{} x {} points written to {}", r.output.grid.omega.len(), r.output.grid.tau.len(), out.display())
        }
        Command::Estimate(_) => {
            let s = run_estimate(&cfg, out)?;
            format!(
                "value_est {:.6} value_exact {:.6} relative_error {:+.4}",
                s.value_est.unwrap_or(f64::NAN),
                s.value_exact,
                s.relative_error.unwrap_or(f64::NAN)
            )
        }
        Command::Validate(_) => {
            let r = run_validate(&cfg, out)?;
            format!("{} checks passed", r.checks.len())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("kpoqa: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

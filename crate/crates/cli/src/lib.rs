//! Configuration, orchestration and file output for the `kpoqa` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use commands::{estimate_run, run_estimate, run_oracle, run_sweep, run_validate};
pub use config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Invalid or unreadable configuration, or a grid that cannot resolve the predicted lines.
    Config(String),
    /// The dispersion minimum is not bracketed by the drive grid.
    Inconclusive(String),
    /// A conservation or convergence check failed.
    Invariant(String),
    Io(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Inconclusive(_) => 3,
            Self::Invariant(_) => 4,
            Self::Io(_) | Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Inconclusive(m) => write!(f, "inconclusive: {m}"),
            Self::Invariant(m) => write!(f, "invariant failure: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
            Self::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<kpo_core::Error> for CliError {
    fn from(e: kpo_core::Error) -> Self {
        use kpo_core::Error as E;
        match &e {
            E::InvalidParameter(_)
            | E::InvalidGrid(_)
            | E::InvalidSpace(_)
            | E::ModeOutOfRange { .. }
            | E::OutOfRange(_)
            | E::StepGuard(_) => {
                Self::Config(e.to_string())
            }
            E::Inconclusive(m) => Self::Inconclusive(m.clone()),
            E::Drift(_) | E::Positivity(_) | E::NonFinite(_) | E::NonHermitian(_) | E::ParityBroken(_) => {
                Self::Invariant(e.to_string())
            }
            E::Sweep { failures } => {
                let first = Self::from((*failures[0].1).clone());
                let msg = e.to_string();
                match first {
                    Self::Config(_) => Self::Config(msg),
                    Self::Invariant(_) => Self::Invariant(msg),
                    _ => Self::Runtime(msg),
                }
            }
            _ => Self::Runtime(e.to_string()),
        }
    }
}

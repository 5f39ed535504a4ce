use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operands belong to different Fock spaces")]
    SpaceMismatch,
    #[error("mode index {mode} out of range for {n_modes} modes")]
    ModeOutOfRange { mode: usize, n_modes: usize },
    #[error("invalid Fock space: {0}")]
    InvalidSpace(String),
    #[error("coherent state truncation tail {tail:.3e} exceeds 1e-3")]
    TruncationTail { tail: f64 },
    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("energy gap vanishes ({0:.3e})")]
    VanishingGap(f64),
    #[error("singular configuration: {0}")]
    Singular(String),
    #[error("Hamiltonian does not conserve parity (commutator norm {0:.3e})")]
    ParityBroken(f64),
    #[error("step-size guard violated: dt*|H| = {0:.3e}")]
    StepGuard(f64),
    #[error("non-finite value encountered during integration at t = {0}")]
    NonFinite(f64),
    #[error("norm or trace drift {0:.3e} exceeds tolerance")]
    Drift(f64),
    #[error("positivity violated: min eigenvalue {0:.3e}")]
    Positivity(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("inconclusive estimate: {0}")]
    Inconclusive(String),
    #[error("sweep failed at {} point(s); first at omega index {}: {}", .failures.len(), .failures[0].0, .failures[0].1)]
    Sweep { failures: Vec<(usize, Box<Error>)> },
}

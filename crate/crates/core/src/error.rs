use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(
        "time step {dt:e} exceeds the stability bound {dt_max:e} (nu={nu}, dx={dx:e}, max|u|={umax:e})"
    )]
    Unstable {
        dt: f64,
        dt_max: f64,
        nu: f64,
        dx: f64,
        umax: f64,
    },

    #[error("solution blew up at step {step} (t={time:e}): {what}")]
    BlowUp {
        step: usize,
        time: f64,
        what: String,
    },

    #[error("tensor-train state became non-finite at step {step} (t = {time})")]
    TtBlowUp {
        step: usize,
        time: f64,
        diagnostics: Box<crate::tt_solver::TtDiagnostics>,
    },

    #[error("site count mismatch: {0} vs {1}")]
    SiteMismatch(usize, usize),

    #[error("bond mismatch at bond {bond}: {left} vs {right}")]
    BondMismatch {
        bond: usize,
        left: usize,
        right: usize,
    },

    #[error("size guard: {what} requires {got} sites/qubits, at most {max} allowed")]
    TooLarge {
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("wire {wire} out of range for a {n_qubits}-qubit register")]
    WireOutOfRange { wire: usize, n_qubits: usize },

    #[error("register width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),

    #[error("zero vector cannot be amplitude encoded")]
    ZeroVector,

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("expectation has imaginary residue {0:e}; observable is not Hermitian")]
    NotHermitian(f64),

    #[error("parameter count mismatch: layout needs {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },

    #[error("optimizer diverged: cost rose for {rises} consecutive iterations")]
    Diverged { rises: usize, history: Vec<f64> },

    #[error("empty collocation set: {0}")]
    EmptySet(&'static str),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

//! Error taxonomy for the runtime.
//!
//! Four families matter to callers: configuration problems (bad flow graphs,
//! ragged partitions, depth mismatches), API misuse, numerical failures from
//! kernels, and deadlock timeouts raised by `wait_all`.

use thiserror::Error;

/// A parse problem tied to a config-file line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub token: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {} ({:?})", self.line, self.message, self.token)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Structural configuration errors: invalid flow graphs, ragged
    /// partitions, partition depth shallower than the executor chain.
    #[error("configuration error: {0}")]
    Config(String),

    /// Config-text parse errors; each diagnostic carries a line number.
    #[error("configuration error:\n{}", format_diagnostics(.0))]
    Parse(Vec<Diagnostic>),

    /// API misuse: duplicate handle registrations, leaf `get_partition`,
    /// submissions while a completion barrier is active, and similar.
    #[error("usage error: {0}")]
    Usage(String),

    /// Operation name not present in the registry.
    #[error("unknown operation {0:?}")]
    UnknownOp(String),

    /// A kernel hit a non-positive (or zero) pivot.
    #[error("numerical failure in {op}: non-positive pivot at global row {row} (value {value:e})")]
    Numerical {
        op: &'static str,
        /// Global row index of the failing pivot in the level-0 matrix.
        row: usize,
        value: f64,
    },

    /// `wait_all` observed no progress for the configured window.
    #[error("deadlock timeout after {seconds:.1}s; unfinished tasks:\n{report}")]
    DeadlockTimeout { seconds: f64, report: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate a bad configuration rather than a bad
    /// run (used by the CLI to map to its exit codes).
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse(_))
    }
}

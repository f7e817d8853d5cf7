use std::path::PathBuf;

use thiserror::Error;

use crate::anova::TestKind;
use crate::ingest::BalanceReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed data row. `line` is 1-based and counts the header.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("{source_name}: missing column `{column}` in header")]
    MissingColumn {
        source_name: String,
        column: &'static str,
    },

    #[error("{source_name}: {message}")]
    InsufficientData { source_name: String, message: String },

    #[error("{source_name}:{line}: {what} {value} is not positive and cannot be log-transformed")]
    NonPositive {
        source_name: String,
        line: u64,
        what: &'static str,
        value: f64,
    },

    #[error(transparent)]
    Unbalanced(#[from] BalanceReport),

    #[error("degenerate design: the dose vector has no spread (S_xxL = 0)")]
    DegenerateDesign,

    #[error("design is not centered: sum of doses is {sum:e}")]
    NotCentered { sum: f64 },

    #[error("{kind} test is undefined: denominator mean square {denominator} is zero")]
    UndefinedTest {
        kind: TestKind,
        denominator: &'static str,
    },

    #[error("degrees of freedom must be positive, got ({d1}, {d2})")]
    DegreesOfFreedom { d1: f64, d2: f64 },

    #[error("probability {0} is outside (0, 1)")]
    Probability(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameters violate the null hypothesis of the {kind} test: {reason}")]
    NullViolation { kind: TestKind, reason: String },

    #[error("report {}: {message}", path.display())]
    Report { path: PathBuf, message: String },
}

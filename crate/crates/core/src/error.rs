//! Error type shared by all modules.

use thiserror::Error;

/// Errors surfaced by block algebra, sections, recurrences, and estimators.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A block that the band structure requires to be invertible failed the
    /// condition cap. `index` is the recurrence row when known.
    #[error("singular block (cond estimate {cond:.3e} exceeds cap {cap:.3e}){}", fmt_index(.index))]
    SingularBlock {
        index: Option<i64>,
        cond: f64,
        cap: f64,
    },

    /// The finite section of `λI − A` is numerically singular; `λ` sits at or
    /// near the section spectrum.
    #[error("singular finite section (size {m} blocks)")]
    SingularSection { m: usize },

    /// Two kernel formulas disagreed on the overlap strip beyond tolerance,
    /// which signals a corrupted basis or Weyl matrix.
    #[error("kernel overlap mismatch at (k={k}, n={n}): relative disagreement {mismatch:.3e}")]
    OverlapMismatch { k: usize, n: usize, mismatch: f64 },

    /// Finite-section Weyl estimates did not settle below tolerance at the
    /// section-size cap.
    #[error("weyl estimate did not converge: gap {gap:.3e} at section size {m_last} blocks")]
    NoConvergence { m_last: usize, gap: f64 },

    /// Operator description could not be interpreted.
    #[error("parse error ({field}): {message}")]
    Parse { field: String, message: String },
}

fn fmt_index(index: &Option<i64>) -> String {
    match index {
        Some(k) => format!(" at row {k}"),
        None => String::new(),
    }
}

pub type Result<V> = std::result::Result<V, Error>;

impl Error {
    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag used in scan rows and diagnose reports.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::SingularBlock { .. } => "singular_block",
            Error::SingularSection { .. } => "singular_section",
            Error::OverlapMismatch { .. } => "overlap_mismatch",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Parse { .. } => "parse_error",
        }
    }
}

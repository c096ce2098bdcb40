use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("edge ({src}, {dst}) has negative weight {weight}")]
    NegativeWeight { src: usize, dst: usize, weight: f64 },

    #[error("matrix is not symmetric (max asymmetry {max_asym:e})")]
    NotSymmetric { max_asym: f64 },

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("gamma function pole at x = {0}")]
    Pole(f64),

    #[error("cannot add {requested} edges: only {available} non-adjacent pairs")]
    NotEnoughNonEdges { requested: usize, available: usize },

    #[error("non-finite state at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("no eigengap: top eigenvalues {top:e} and {second:e} are indistinguishable")]
    NoEigengap { top: f64, second: f64 },

    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("weights are not on the simplex: {0}")]
    Simplex(String),

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("training split needs at least two classes")]
    SingleClass,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("split overlap: node {node} in both {first} and {second}")]
    SplitOverlap {
        node: usize,
        first: &'static str,
        second: &'static str,
    },

    #[error("AVLA did not terminate within {rounds} rounds")]
    NonTermination { rounds: usize },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("bad matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (blow-up, non-convergence, degenerate
    /// spectra) as opposed to invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BlowUp { .. }
                | Error::Degenerate(_)
                | Error::NoEigengap { .. }
                | Error::NotConverged { .. }
                | Error::NonFinite(_)
                | Error::NonTermination { .. }
                | Error::Pole(_)
        )
    }

    pub(crate) fn invalid(name: &'static str, value: impl ToString, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value: value.to_string(),
            reason,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            what,
            expected: format!("{}x{}", expected.0, expected.1),
            got: format!("{}x{}", got.0, got.1),
        }
    }
}

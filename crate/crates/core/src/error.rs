use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh: {0}")]
    Mesh(String),

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("mass factorization failed: non-positive pivot {pivot:e} at row {row} (degenerate mesh?)")]
    SingularMass { row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("krylov: no convergence after {substeps} substeps (achieved error estimate {residual:e}, tolerance {tol:e})")]
    KrylovNoConvergence {
        substeps: usize,
        residual: f64,
        tol: f64,
    },

    #[error("dense expm: dimension {dim} exceeds cap {cap}")]
    DenseTooLarge { dim: usize, cap: usize },

    #[error("noise: {0}")]
    Noise(String),

    #[error("model: non-finite {what} at node {node}")]
    NonFinite { what: &'static str, node: usize },

    #[error("integrator: realization {realization} aborted at step {step}: {source}")]
    Realization {
        realization: u64,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reference: {0}")]
    Reference(String),

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("config: key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }
}

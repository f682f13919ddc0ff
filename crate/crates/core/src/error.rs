use thiserror::Error;

/// Errors raised by the geometry, constraint, sampler and model code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("geodesic is degenerate between antipodal points")]
    GeodesicDegeneracy,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("query point lies on a polygon edge (boundary-ambiguous)")]
    BoundaryAmbiguous,

    #[error("rejection sampler stuck after {tries} tries")]
    StuckState { tries: usize },

    #[error("reflected step exceeded the reflection budget after {count} reflections")]
    ReflectionBudget { count: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input at index {index}: {reason}")]
    Input { index: usize, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("initialisation failed: {0}")]
    Initialisation(String),

    #[error("beta1 tuning failed: criterion not met below beta1 = {cap}")]
    TuningFailure { cap: f64 },

    #[error("no convergence within {steps} steps")]
    NonConvergence { steps: usize },

    #[error("generator acceptance {rate:e} is below 1e-4; the mixture does not match the constraint")]
    GeneratorMismatch { rate: f64 },

    #[error("loss is not finite at step {step} (parameter norm {param_norm:e})")]
    NonFiniteLoss { step: usize, param_norm: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

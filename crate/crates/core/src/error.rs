use thiserror::Error;

/// Errors raised by model construction, the solvers, and the experiment
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("mass matrix is singular at the queried configuration")]
    SingularMass,

    #[error("compatibility matrix A M^-1 A^T is singular at the queried configuration")]
    SingularCompatibility,

    #[error("state violates the velocity constraints: |A(q) v|_inf = {residual:.3e}")]
    ConstraintViolated { residual: f64 },

    #[error("trajectory diverged (non-finite state) at step {step}")]
    Divergence { step: usize },

    #[error(
        "shooting did not reach the target configuration: terminal error {terminal_error:.3e} \
         after {iterations} iterations"
    )]
    NotOnSubmanifold {
        terminal_error: f64,
        iterations: usize,
    },

    #[error("boundary variation is not tangent to the discrete constraint set: |d mu| = {derivative:.3e}")]
    InvalidTangent { derivative: f64 },

    #[error("Newton did not converge: residual {residual:.3e} after {iterations} iterations")]
    NewtonStalled { residual: f64, iterations: usize },

    #[error("singular Jacobian in a Newton solve")]
    SingularJacobian,

    #[error("discrete step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("initial pair violates the discrete constraint: |omega|_inf = {residual:.3e}")]
    SeedPairOffConstraint { residual: f64 },

    #[error("frame singularity: {0}")]
    FrameSingularity(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Error type shared by all modules.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the numerical pipeline.
///
/// Geometry and grid construction reject invalid inputs eagerly, solvers
/// report non-convergence with the last iterate attached, and quadrature
/// refuses to return a value that missed its tolerance.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An evaluation point lies outside the domain of definition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The warping function vanishes or turns negative where it must not.
    #[error("singular warping: {0}")]
    Singularity(String),

    /// Adaptive quadrature exhausted its subdivision budget above tolerance.
    #[error("quadrature failed: {0}")]
    Quadrature(String),

    /// Invalid configuration; the message lists every violation found.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Array or grid shapes do not match.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Newton iteration did not reach tolerance. Carries the iteration count,
    /// the last residual norm and the last iterate.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// The factored linear system is numerically singular. During Newton
    /// iteration this typically signals an eigenvalue of the linearization
    /// crossing zero.
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Inverse power iteration stagnated.
    #[error("eigenvalue solve failed: {0}")]
    EigenSolve(String),

    /// A mathematical precondition of the requested check does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// No admissible barrier slope exists; the requested bound sits at or
    /// above the stability threshold.
    #[error("no admissible barrier window: {0}")]
    Window(String),

    /// Filesystem failure while persisting records or plots.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Human-readable kind tag, stable across message changes. Used by the
    /// harness to serialize failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Singularity(_) => "singularity",
            Error::Quadrature(_) => "quadrature",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::NonConvergence { .. } => "non_convergence",
            Error::LinearSolve(_) => "linear_solve",
            Error::EigenSolve(_) => "eigen_solve",
            Error::Precondition(_) => "precondition",
            Error::Window(_) => "window",
            Error::Io(_) => "io",
        }
    }
}

use thiserror::Error;

/// Errors shared by every simulation module.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Tensor or comparison between a state and an operator.
    #[error("kind mismatch: {0}")]
    KindMismatch(String),

    /// Two values were expected to live on the same basis.
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    /// A subsystem role was requested that the basis does not carry,
    /// or the basis does not factor over the declared roles.
    #[error("role error: {0}")]
    Role(String),

    /// Attempt to normalize (or condition on) a branch with near-zero norm.
    #[error("impossible branch: norm {norm:e} below threshold")]
    ImpossibleBranch { norm: f64 },

    /// Null-result conditioning on a projector that covers the full support.
    #[error("null result impossible: complement norm {norm:e} below threshold")]
    NullResultImpossible { norm: f64 },

    /// Forcing a measurement outcome whose Born probability vanishes.
    #[error("zero-probability outcome: {0}")]
    ZeroProbabilityOutcome(String),

    /// A matrix failed a structural validation (Hermiticity, positivity, trace).
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// Dimension of an input does not match what the operation requires.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// Wavepacket grid does not contain the branch support.
    #[error(
        "grid too narrow: boundary amplitude ratio {boundary_ratio:e} exceeds 1e-8; \
         suggested bounds [{suggested_min}, {suggested_max}]"
    )]
    GridTooNarrow {
        boundary_ratio: f64,
        suggested_min: f64,
        suggested_max: f64,
    },

    /// Tomography input lacks one of the required observables.
    #[error("missing observable coverage: {0}")]
    MissingObservable(String),

    /// Malformed protocol strategy description.
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),

    /// Event log missing entries required by the causal-order checker.
    #[error("incomplete event log: {0}")]
    IncompleteLog(String),

    /// A trial failed its causal-order check; the session is aborted.
    #[error("causality violation in trial {trial}: {detail}")]
    CausalityViolation { trial: u64, detail: String },

    /// Setting/observable arity mismatch in a steering functional.
    #[error("setting mismatch: {0}")]
    SettingMismatch(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

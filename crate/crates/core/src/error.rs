//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a precondition (bad field value, empty grid, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A data file could not be parsed; reports the offending line.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// The normal equations are singular; lists the parameters dominating
    /// the near-null direction.
    #[error("singular jacobian; degenerate parameter subset: {parameters:?}")]
    SingularJacobian { parameters: Vec<String> },

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    /// Initial-guess failure: the sweep does not contain the charge
    /// transition (no asymptotic plateaus on both sides).
    #[error("transition not contained in sweep: {0}")]
    TransitionNotContained(String),

    /// Per-column mixture splitting failed at every detuning column.
    #[error("branches unresolved")]
    BranchesUnresolved,

    /// More than one steady state; reports the singular-value gap ratio.
    #[error("degenerate steady state (second singular value / largest = {gap:.3e})")]
    DegenerateSteadyState { gap: f64 },

    /// `2 erf^-1(C)/sqrt(N) >= 1`: the variance interval reaches zero.
    #[error("interval unbounded: N = {shots} is too small for confidence {confidence}")]
    IntervalUnbounded { confidence: f64, shots: u64 },

    /// Lower bound of the eta interval would be imaginary.
    #[error("separation unresolvable at this N (lower bound argument {argument:.4} < 0)")]
    UnresolvableSeparation { argument: f64 },

    #[error("zero contrast: eta = 0 while delta_sb > 0")]
    ZeroContrast,

    /// 1/f noise integrated with a filter that does not roll off at DC.
    #[error("divergent 1/f integral: set the low-frequency cutoff `low_freq_cutoff_hz`")]
    MissingCutoff,

    #[error("no funnel detected: every column failed the contrast precondition")]
    NoFunnelDetected,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate detuning axis: the sweep direction has no energy projection")]
    DegenerateDetuningAxis,
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

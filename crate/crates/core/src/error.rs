use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {x} lies outside the domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("derivative at {x} is one-sided only; request the left or right derivative")]
    SideRequired { x: f64 },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("critical point {c} is not a power-law point: {reason}")]
    NotPowerLaw { c: f64, reason: String },

    #[error("derivative vanishes identically near critical point {c}")]
    FlatCritical { c: f64 },

    #[error("left and right exponents differ at {c}: {left} vs {right}")]
    ExponentMismatch { c: f64, left: f64, right: f64 },

    #[error("ratio sequence at {c} has no limit (Cauchy spread {spread:e})")]
    NoLimit { c: f64, spread: f64 },

    #[error("not a very good mapping: {reason}")]
    NotVeryGood { reason: String, iterate: Option<usize> },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("semi-good condition violated: {0}")]
    SemiGood(String),

    #[error("derivative of the coordinate change is singular at chart center {x}")]
    Singularity { x: f64 },

    #[error("one-sided derivatives at {c} are not nonzero limits: {reason}")]
    Lemma1Failure { c: f64, reason: String },

    #[error("orbit escapes the domain at step {step} (value {value})")]
    Escape { step: usize, value: f64 },

    #[error("{y} has no preimage in [{lo}, {hi}]")]
    NoPreimage { y: f64, lo: f64, hi: f64 },

    #[error("map is not monotone on [{lo}, {hi}]")]
    Branch { lo: f64, hi: f64 },

    #[error("sequence is not suitable at index {index}: {reason}")]
    NotSuitable { index: usize, reason: String },

    #[error("orbit enters the critical set at step {step}")]
    Precondition { step: usize },

    #[error("pullback left the certified interval at index {index}")]
    Consistency { index: usize },

    #[error("invalid constant: {0}")]
    InvalidConstant(String),

    #[error("degenerate pair: distance to the post-critical set is zero")]
    DegeneratePair,

    #[error("three-product identity failed at index {index} (relative error {error:e})")]
    Factorization { index: usize, error: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Errors raised while building structures from a valid config.
    pub fn is_construction(&self) -> bool {
        !matches!(self, Error::Config(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

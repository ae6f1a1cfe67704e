use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("eigenvalues coincide at {state:?} (gap {gap:e})")]
    NonHyperbolic { state: Vec<f64>, gap: f64 },
    #[error("state {state:?} lies outside the admissible box")]
    OutOfDomain { state: Vec<f64> },
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("family {family} is not genuinely nonlinear at {state:?} (grad lambda . r = {value:e})")]
    GnlViolation { family: usize, state: Vec<f64>, value: f64 },

    #[error("wave curve of family {family} left the admissible box")]
    CurveEscape { family: usize },
    #[error("Hugoniot root-finding failed for family {family} at strength {strength}")]
    NoRoot { family: usize, strength: f64 },
    #[error("Riemann solver did not converge (residual {residual:e})")]
    NoSolution { residual: f64 },
    #[error("states are not connected by a single shock (residual {residual:e})")]
    NotOnLocus { residual: f64 },

    #[error("event budget of {0} interactions exceeded")]
    EventBudgetExceeded(usize),
    #[error("time {t} outside [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },

    #[error("profile is not monotone: {0}")]
    NotMonotone(String),
    #[error("measure has negative mass {0}")]
    NegativeMass(f64),
    #[error("interaction potential increased at t = {t}")]
    NonMonotoneHistory { t: f64 },

    #[error("CFL condition violated: {0}")]
    CflViolation(String),
    #[error("computational domain too small: {0}")]
    DomainTooSmall(String),
    #[error("states do not form a Lax shock")]
    NotLaxPair,
    #[error("shock profile shooting failed: {0}")]
    ShootFailure(String),

    #[error("squeeze map argument {xi} outside (-{limit}, {limit})")]
    SqueezeOutOfRange { xi: f64, limit: f64 },
    #[error("no shock profile available for track {0}")]
    MissingProfile(usize),
    #[error("tracks {0} and {1} overlap")]
    OverlappingTracks(usize, usize),
    #[error("quadrature too coarse: relative change {0}")]
    ResolutionTooCoarse(f64),
    #[error("event at t = {t} could not be classified")]
    UnclassifiableEvent { t: f64 },

    #[error("functional increased by {increase:e} at t = {t} ({case})")]
    MonotonicityViolation { t: f64, case: String, increase: f64 },

    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

use thiserror::Error;

/// Every rejection the library can produce.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("label {0} is not binary")]
    InvalidLabel(i64),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameter vector outside the ball: norm {norm} > radius {radius}")]
    OutsideBall { norm: f64, radius: f64 },

    #[error("feature not in the finite domain")]
    FeatureOutsideDomain,

    #[error("feature has {got} coordinates, family expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("every expert has zero likelihood on the observed past")]
    DegeneratePosterior,

    #[error("predictor protocol violated: {0}")]
    Protocol(&'static str),

    #[error("horizon {horizon} exceeds the enumeration cap {cap}")]
    EnumerationCap { horizon: usize, cap: usize },

    #[error("size {size:.3e} exceeds cap {cap:.3e}: {what}")]
    SizeCap { what: &'static str, size: f64, cap: f64 },

    #[error("could not draw {count} code vectors of length {length} with pairwise distance >= length/4 within {retries} retries")]
    CodebookInfeasible {
        count: usize,
        length: usize,
        retries: usize,
    },

    #[error("link {link} fails the interval containment check at d={d}, r={r}")]
    LinkContainment { link: String, d: usize, r: f64 },

    #[error("hessian bound {claimed} refused: empirical curvature {empirical}")]
    HessianBound { claimed: f64, empirical: f64 },

    #[error("bound domain violated: {0}")]
    BoundDomain(String),

    #[error("internal consistency failure: {0}")]
    Inconsistent(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("latitude {0} is outside the valid range for this projection")]
    LatitudeOutOfRange(f64),

    #[error("invalid geographic point ({lat}, {lon})")]
    InvalidGeoPoint { lat: f64, lon: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("duplicate vantage point id `{0}`")]
    DuplicateVantagePoint(String),

    #[error("measurement references unknown vantage point `{0}`")]
    UnknownVantagePoint(String),

    #[error("non-positive RTT {rtt} ms for pair {src} -> {dst}")]
    NonPositiveRtt { src: String, dst: String, rtt: f64 },

    #[error("no measurement for pair {0} <-> {1}")]
    MissingPair(String, String),

    #[error("vertices {0} and {1} lie in different connected components")]
    Disconnected(usize, usize),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("mesh needs at least 2 vertices per side, got {0}")]
    GridTooSmall(usize),

    #[error("degenerate triangle {face} (area {area:e})")]
    DegenerateTriangle { face: usize, area: f64 },

    #[error("edge ball for graph edge {0}-{1} is empty; radius is below mesh resolution")]
    EmptyEdgeBall(usize, usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point ({0}, {1}) is outside the mesh domain")]
    OutsideDomain(f64, f64),

    #[error("regression needs at least two distinct distances")]
    DegenerateRegression,

    #[error("snapshots do not share the same vantage points")]
    MismatchedSnapshots,

    #[error("non-finite loss encountered")]
    NonFiniteLoss,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("artifact validation failed at {pointer}: {message}")]
    Validation { pointer: String, message: String },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn validation(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

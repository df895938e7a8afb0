use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("cannot read scenario {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("walkable cell ({row}, {col}) cannot reach any goal cell")]
    Unreachable { row: usize, col: usize },
    #[error("no goal cells in floor-field geometry")]
    NoGoal,
    #[error("mask has {got} cells, expected {expected}")]
    MaskSize { got: usize, expected: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("design matrix is rank deficient (column {column})")]
    SingularDesign { column: usize },
    #[error("insufficient data: n = {n}, need more than {needed}")]
    InsufficientData { n: usize, needed: usize },
    #[error("predictor rows have inconsistent width")]
    Ragged,
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("timestamp {time} s lies outside [0, {limit}) s")]
    OutOfRange { time: f64, limit: f64 },
}

#[derive(Debug, Error, PartialEq)]
#[error("car {car} already holds a decision for episode {episode}")]
pub struct DecisionAlreadyMade {
    pub car: u64,
    pub episode: u64,
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("target non-compliance {target:.4} is below the forced floor {floor:.4}")]
    InfeasibleTarget { target: f64, floor: f64 },
    #[error("target {0} must lie in [0,1]")]
    TargetOutOfRange(f64),
    #[error("calibration needs at least one replication seed")]
    NoSeeds,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error("duplicate seed {0} in batch")]
    DuplicateSeed(u64),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serialize(String),
}

impl RunError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

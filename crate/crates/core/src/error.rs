use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty population: the model has no units")]
    EmptyPopulation,

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("partition violation: {0}")]
    Partition(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("design arm {arm} contains no units")]
    EmptyArm { arm: usize },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("estimator undefined: {0}")]
    UndefinedEstimator(String),

    #[error("insufficient replication: {0}")]
    InsufficientReplication(String),

    #[error("degenerate test: combined variance is not positive")]
    DegenerateTest,

    #[error("unreliable estimate: {excluded} of {total} draws were degenerate")]
    Unreliable { excluded: usize, total: usize },

    #[error("node {0} is not assigned to any partition")]
    Unassigned(usize),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Draw-level failures that Monte-Carlo runs tolerate and exclude.
    pub fn is_degenerate_draw(&self) -> bool {
        matches!(
            self,
            Error::DegenerateDesign(_) | Error::UndefinedEstimator(_) | Error::EmptyArm { .. }
        )
    }
}

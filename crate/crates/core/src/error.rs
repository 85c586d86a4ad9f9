use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension n = {0} is not supported (need n >= 3)")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("coordinate outside chart: |x'| = {norm} >= rho = {radius}")]
    OutsideChart { norm: f64, radius: f64 },

    #[error("kernel singularity: coincident points")]
    Singularity,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("extrapolation unreliable: {0}")]
    ExtrapolationUnreliable(String),

    #[error("singular recovery system (determinant {0:e})")]
    SingularCase(f64),

    #[error("near-degenerate frames: smallest singular value {0:e}")]
    DegenerateFrames(f64),

    #[error("quadrature produced a non-finite value: {0}")]
    Quadrature(String),

    #[error("probe dictionary is empty")]
    EmptyDictionary,

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("infeasible certificate: {0}")]
    Infeasible(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The innermost error behind any stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Attaches a pipeline stage name to errors.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}

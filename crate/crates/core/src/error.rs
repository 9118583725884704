use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate smoothing window at {at:?} (bandwidth widened up to {bandwidth})")]
    DegenerateWindow { at: Vec<f64>, bandwidth: f64 },
    #[error("local design matrix is rank deficient at {at:?}")]
    RankDeficient { at: Vec<f64> },
    #[error("no bandwidth candidates supplied")]
    EmptyCandidates,
    #[error("every bandwidth candidate produced a degenerate fit")]
    AllDegenerate,
    #[error("no subject has two or more observations; covariance pairs are unavailable")]
    NoPairs,
    #[error("surface is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("covariance of subject {subject} is singular (condition number {condition:e})")]
    SingularCovariance { subject: String, condition: f64 },
    #[error("eigenvalue {index} is at or below the truncation threshold")]
    ZeroEigenvalue { index: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("time {time} lies outside the domain [{lo}, {hi}]")]
    TimeOutOfDomain { time: f64, lo: f64, hi: f64 },
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("eigen spectrum is empty")]
    EmptySpectrum,
    #[error("unsupported basis order {0}")]
    UnsupportedOrder(usize),
    #[error("true derivative of subject {subject} has zero energy")]
    ZeroDenominator { subject: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage labels removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}

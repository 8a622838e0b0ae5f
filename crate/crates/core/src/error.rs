use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BikeError {
    #[error("too few samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("degenerate reflection line at step {step}")]
    DegenerateLine { step: usize },
    #[error("Moebius fit degenerate: {0}")]
    FitDegenerate(String),
    #[error("no periodic steering solution: monodromy is {0}")]
    NoPeriodicSolution(String),
    #[error("monodromy is not hyperbolic ({0})")]
    NotHyperbolic(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("flow blew up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, BikeError>;

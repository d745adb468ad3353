use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("inadmissible stable pair (alpha={alpha}, beta={beta})")]
    InadmissiblePair { alpha: f64, beta: f64 },
    #[error("scale must be positive, got {0}")]
    NonpositiveScale(f64),
    #[error("quadrature did not reach tolerance {tol:e} (error estimate {estimate:e}) in {context}")]
    QuadratureFailure { context: String, tol: f64, estimate: f64 },
    #[error("bad family parameters: {0}")]
    BadFamilyParams(String),
    #[error("budget too small: {0}")]
    BudgetTooSmall(String),
    #[error("kernel needs {cells} cells, limit is {limit}")]
    HorizonTooLarge { cells: usize, limit: usize },
    #[error("conditioning event has probability zero: {0}")]
    ImpossibleEvent(String),
    #[error("rejection sampler gave up after {0} attempts")]
    RejectionBudgetExceeded(u64),
    #[error("no endpoint mass in bin around b={b} (a={a})")]
    EmptyBin { a: f64, b: f64 },
    #[error("estimates of {name} disagree: {first} vs {second} (combined error {error})")]
    InconsistentEstimates { name: String, first: f64, second: f64, error: f64 },
    #[error("inputs outside the window of case {case}: {detail}")]
    RegimeMismatch { case: String, detail: String },
    #[error("population exceeded cap {cap} at generation {generation}")]
    PopulationOverflow { cap: u64, generation: usize },
    #[error("only {accepted} accepted replicas, need {floor}")]
    TooFewAccepted { accepted: u64, floor: u64 },
    #[error("empty sample")]
    EmptySample,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing dependency: {0}")]
    DependencyMissing(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by data loading, planning, nuisance fitting and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("formula error: {0}")]
    Formula(String),
    #[error("plan error: {0}")]
    Plan(String),
    #[error("incomplete coverage: times {times:?} are not predicted by any block")]
    IncompleteCoverage { times: Vec<u32> },
    #[error("rank deficient design (condition number {condition:.3e}); collinear columns: {columns:?}")]
    RankDeficient { condition: f64, columns: Vec<String> },
    #[error("Newton solver did not converge after {iterations} iterations (last step {last_step:.3e})")]
    Convergence { iterations: usize, last_step: f64 },
    #[error("horizon weight {value:.3e} exceeds the overflow guard at decision {t} of individual {individual}")]
    HorizonWeight { individual: String, t: u32, value: f64 },
    #[error("incompatible estimator: {0}")]
    Incompatible(String),
    #[error("harness error: {0}")]
    Harness(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

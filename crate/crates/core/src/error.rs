use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole of the gamma function at z = {0}")]
    Pole(i64),
    #[error("requested accuracy not reached: estimated error {achieved:e}, requested {requested:e}")]
    Accuracy { achieved: f64, requested: f64 },
    #[error("{what} did not converge: {detail}")]
    Convergence { what: &'static str, detail: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

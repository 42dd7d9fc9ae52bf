use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A competition or domain constraint was violated (cell area, selection area, ...).
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x}, {y}) lies outside the grid coverage")]
    OutOfBounds { x: f64, y: f64 },

    #[error("cell index {0} is not part of the grid")]
    InvalidCell(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("insufficient history: {lags} lags of {window_days} days need forecast time >= {earliest_day}, got {requested_day}")]
    InsufficientHistory {
        lags: usize,
        window_days: f64,
        earliest_day: f64,
        requested_day: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input or configuration rather than numerics.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

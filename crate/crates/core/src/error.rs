use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}, column `{column}`: {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("positivity error: {0}")]
    Positivity(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error at row {row}, column `{column}`: value {value} is negative")]
    Domain { row: usize, column: String, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("singular design: columns {columns:?} are linearly dependent")]
    SingularDesign { columns: Vec<String> },

    #[error("weight error: {0}")]
    Weight(String),

    #[error("separation detected: coefficient `{column}` reached {value:.3} while the likelihood kept improving")]
    Separation { column: String, value: f64 },

    #[error("model did not converge: {0}")]
    Convergence(String),

    #[error("no matched pairs: {0}")]
    EmptyMatch(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("variance error: {0}")]
    Variance(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse class of the error, used for process exit codes.
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Schema(_) | Config(_) => ErrorClass::Config,
            Data { .. } | Positivity(_) | Dimension(_) | Domain { .. } | Degenerate(_) | Size(_)
            | Io(_) | Csv(_) | Json(_) => ErrorClass::Data,
            SingularDesign { .. } | Weight(_) | Separation { .. } | Convergence(_)
            | EmptyMatch(_) | Stratification(_) | Variance(_) | Numerical(_) => {
                ErrorClass::Numerical
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum GmrError {
    #[error("configuration error: {0}")]
    Config(String),

    /// Several configuration problems found at once; reported together.
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    ConfigList(Vec<String>),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("specific volume non-positive ({value:e}) at cell {cell:?}")]
    EosDomain { cell: [usize; 3], value: f64 },

    #[error("{field} = {value} outside admissible range [{lo}, {hi}] at cell {cell:?}")]
    Admissibility {
        field: &'static str,
        cell: [usize; 3],
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GmrError>;

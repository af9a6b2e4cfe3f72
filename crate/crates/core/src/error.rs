use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("row {row}, column {col}: cannot parse {cell:?} as a number")]
    Parse { row: usize, col: usize, cell: String },

    #[error("row {row}, column {col}: non-finite value {cell:?}")]
    NonFinite { row: usize, col: usize, cell: String },

    #[error("row {row}, column {col}: categorical variables are not allowed (found {cell:?})")]
    Categorical { row: usize, col: usize, cell: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    Arity { row: usize, found: usize, expected: usize },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("column index {index} out of range for {d} columns")]
    ColumnOutOfRange { index: usize, d: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model {model} is not valid for {d}-dimensional data")]
    ModelDimension { model: String, d: usize },

    #[error("component {component} collapsed (mass {mass:e})")]
    ComponentCollapse { component: usize, mass: f64 },

    #[error("singular covariance")]
    Singular,

    #[error("degenerate regression: {0}")]
    DegenerateRegression(String),

    #[error("no mixture model produced a finite BIC")]
    NoModel,

    #[error("unknown covariance model {0:?}")]
    UnknownModel(String),
}

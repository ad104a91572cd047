use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A factor value or flat index lies outside its dimension.
    #[error("dimension error at position {position}: value {value} not below {bound}")]
    Dimension {
        position: usize,
        value: usize,
        bound: usize,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("inconsistent data: {0}")]
    Data(String),

    /// An empirical estimate was requested for a cell with no observations.
    #[error("estimate undefined: scope cell {cell} of factor {factor} has no observations")]
    UndefinedEstimate { factor: usize, cell: usize },

    /// A confidence bonus was requested with a zero visit count.
    #[error("bonus undefined for zero visit count")]
    UndefinedBonus,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("enumeration too large: {atoms} atoms exceeds limit {limit}")]
    EnumerationTooLarge { atoms: u128, limit: u128 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

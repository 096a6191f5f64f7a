use thiserror::Error;

/// Which end of a parameter range a target fell off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Below => f.write_str("below"),
            Side::Above => f.write_str("above"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample of length {len} is too short for arity {arity}")]
    SampleTooShort { len: usize, arity: usize },

    #[error("{count} subsets exceed the exact evaluation limit of {limit}; use incomplete_u_statistic")]
    TooManySubsets { count: u128, limit: u64 },

    #[error("expected {expected} observations, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("median kernel needs an odd arity, got {0}")]
    EvenMedianArity(usize),

    #[error("arity {arity} exceeds the limit of {limit}")]
    ArityTooLarge { arity: usize, limit: usize },

    #[error("accumulator holds {have} observations but needs {need}")]
    NotReady { have: usize, need: usize },

    #[error("{count} outcome tuples exceed the enumeration limit of {limit}")]
    StateSpaceTooLarge { count: u128, limit: u64 },

    #[error("quadrature did not converge: value {value}, error estimate {error:e}")]
    Quadrature { value: f64, error: f64 },

    #[error("{0} has zero variance")]
    Degenerate(String),

    #[error("target {target} lies {side} the range of the mean map")]
    OutOfRange { target: f64, side: Side },

    #[error("parameter {theta} is outside the domain of {family}")]
    ParameterOutOfDomain { family: String, theta: f64 },

    #[error("density integrates to {mass} at theta = {theta}")]
    Normalization { theta: f64, mass: f64 },

    #[error("mean map is not strictly monotone on the parameter grid")]
    NotMonotone,

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error("unknown family `{0}`")]
    UnknownFamily(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

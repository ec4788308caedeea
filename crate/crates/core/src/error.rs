use thiserror::Error;

use crate::dsl::{DslError, EvalError};

pub type Result<T> = std::result::Result<T, Error>;

/// Error classes; [`Error::class`] groups them for exit-code reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed game: {0}")]
    MalformedSpec(String),
    #[error("expression error: {0}")]
    Dsl(#[from] DslError),
    #[error("coefficient evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("empty Hamiltonian at {0}")]
    EmptyHamiltonian(String),
    #[error("Hamiltonian is not a singleton at {0}")]
    NotSingleton(String),
    #[error("selector '{label}' leaves the Hamiltonian at {at}")]
    SelectorInvalid { label: String, at: String },
    #[error("index {index} out of range for a family of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("tree depth {depth} exceeds the limit of {max}")]
    DepthTooLarge { depth: usize, max: usize },
    #[error("tree too shallow: tilted probability leaves (0,1); need depth >= {min_depth}")]
    DepthTooSmall { min_depth: usize },
    #[error("CFL condition violated: {0}")]
    Cfl(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("point lies outside the partition cover: {0}")]
    OutsideCover(String),
    #[error("point ({t}, {x}) outside the solution grid")]
    OutOfHull { t: f64, x: f64 },
}

/// Coarse grouping used by front ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Spec,
    Emptiness,
    NumericGuard,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::MalformedSpec(_)
            | Error::Dsl(_)
            | Error::Eval(_)
            | Error::InvalidArgument(_)
            | Error::Precondition(_)
            | Error::IndexOutOfRange { .. } => ErrorClass::Spec,
            Error::EmptyHamiltonian(_) | Error::NotSingleton(_) | Error::SelectorInvalid { .. } => {
                ErrorClass::Emptiness
            }
            Error::DepthTooLarge { .. }
            | Error::DepthTooSmall { .. }
            | Error::Cfl(_)
            | Error::NonFinite(_)
            | Error::OutsideCover(_)
            | Error::OutOfHull { .. } => ErrorClass::NumericGuard,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("series length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("series is in the {found} domain, expected {expected}")]
    DomainMismatch { expected: &'static str, found: &'static str },
    #[error("eigenvector {0} is self-orthogonal under the c-product")]
    SelfOrthogonal(usize),
    #[error("eigen decomposition failed")]
    EigenFailure,
    #[error("resonant denominator |{value:.3e}| for complement state {state} at frequency bin {bin}; change the energy shift")]
    ResonantDenominator { state: usize, bin: usize, value: f64 },
    #[error("initial state has weight outside the active space")]
    OutsideActiveSpace,
    #[error("P0 U P0 is singular at t = {time} (grid index {index})")]
    Singular { index: usize, time: f64 },
    #[error("numerical consistency violated: {0}")]
    Consistency(String),
    #[error("Floquet matrix is not diagonalisable")]
    NotDiagonalizable,
}

pub type Result<T> = std::result::Result<T, Error>;

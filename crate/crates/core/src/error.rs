use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("recurrence overflowed at index {index}")]
    Overflow { index: usize },

    #[error("recurrence coefficient A_{index} has zero slope in the spectral unknown")]
    ZeroSlope { index: usize },

    #[error("cannot symmetrize: U_{}/W_{} = {ratio} is not positive", .index + 1, .index)]
    SymmetrizationImpossible { index: usize, ratio: f64 },

    #[error("parameters lie on a well-classification boundary (a = {a}, b = {b})")]
    WellBoundary { a: f64, b: f64 },

    #[error("point {point} is outside the model domain")]
    Domain { point: f64 },

    #[error("root index {index} out of range for {count} roots")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("polynomial root {root} lies within 1e-7 of the domain endpoint")]
    AmbiguousNode { root: f64 },

    #[error("quadrature did not reach tolerance (estimate {estimate:e})")]
    Precision { estimate: f64 },

    #[error("moment of order {order} is not in the table")]
    MomentUnavailable { order: f64 },

    #[error("Gram matrix condition {condition:e} exceeds threshold; largest safe basis size is {safe_size}")]
    Conditioning { condition: f64, safe_size: usize },

    #[error("Hamiltonian assembly asymmetry {defect:e} exceeds tolerance")]
    Assembly { defect: f64 },

    #[error("level {level} crossed another level inside the finite-difference step")]
    Crossing { level: usize },

    #[error("no sign change of E in the bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

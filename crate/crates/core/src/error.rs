use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: size {size} exceeds configured cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("matrix {name} is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { name: &'static str, deviation: f64 },

    #[error("matrix B is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("odd interaction: vertex ({m},{mbar}) has odd total degree")]
    OddInteraction { m: usize, mbar: usize },

    #[error("interaction vertex v_(0,0) must vanish")]
    ConstantVertex,

    #[error("interaction vertex ({m},{mbar}) is not antisymmetric (deviation {deviation:e})")]
    NotAntisymmetric { m: usize, mbar: usize, deviation: f64 },

    #[error("site index {index} out of range for {n_sites} sites")]
    SiteIndex { index: usize, n_sites: usize },

    #[error("invalid metric: {0}")]
    Metric(String),

    #[error("non-finite result in {0}")]
    NonFinite(&'static str),

    #[error("numerically singular matrix in {0}")]
    Singular(&'static str),

    #[error("Grassmann polynomial has zero body")]
    ZeroBody,

    #[error("generator count mismatch: {0} vs {1}")]
    GeneratorMismatch(usize, usize),

    #[error("hypotheses violated: {0}")]
    Hypothesis(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

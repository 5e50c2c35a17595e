//! Keldysh functional-integral laboratory for finite fermionic systems.

pub mod bounds;
pub mod covariance;
pub mod cumulants;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod grassmann;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod scalar;
pub mod tensor;
pub mod wick;

pub use error::{Error, Result};
pub use scalar::{CMatrix, Cx, Real};

/// Double-precision aliases.
pub type Model = model::OneParticleModel<f64>;
pub type Couplings = model::Interaction<f64>;
pub type Covariance64 = covariance::ContinuumCovariance<f64>;
pub type DiscreteSystem = covariance::DiscreteKeldyshSystem<f64>;
pub type Fock = fock::FockSpace<f64>;
pub type State = fock::EvolutionState<f64>;
pub type Polynomial = grassmann::GrassmannPolynomial<f64>;
pub type Cumulants = cumulants::CumulantTable<f64>;
pub type Tensor = tensor::SiteTensor<f64>;

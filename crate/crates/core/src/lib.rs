//! Stochastic exponential integrators for parabolic SPDEs on rectangles.
//!
//! The numerical core is generic over the scalar type; the aliases below fix
//! it to `f64`, which is what the studies and the CLI use.

pub mod error;
pub mod fem;
pub mod linalg;
pub mod matfunc;
pub mod mesh;
pub mod modal;
pub mod scalar;
pub mod noise;
pub mod integrator;
pub mod model;
pub mod reference;
pub mod experiments;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh64 = mesh::Mesh<f64>;
pub type FemOperators64 = fem::FemOperators<f64>;
pub type CovarianceSpectrum64 = noise::CovarianceSpectrum<f64>;
pub type SpectralBasis64 = noise::SpectralBasis<f64>;
pub type ModeMatrix64 = noise::ModeMatrix<f64>;
pub type SpdeProblem64 = model::SpdeProblem<f64>;
pub type RunConfig64 = integrator::RunConfig<f64>;
pub type Scheme64<'a> = integrator::Scheme<'a, f64>;
pub type Trajectory64 = integrator::Trajectory<f64>;
pub type OuModel64 = reference::OuModel<f64>;
pub type DenseMatrix64 = linalg::DenseMatrix<f64>;

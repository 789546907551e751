//! Frozen Calogero-Moser-Sutherland particle systems.
//!
//! Deterministic particle flows for the Hermite (type A), Laguerre (type B),
//! compact and noncompact Jacobi and torus families, the linear inverse heat
//! equations satisfied by their characteristic polynomials, and Monte Carlo
//! checks of the associated expectation identities for the diffusions at
//! finite inverse temperature.

pub mod error;
pub mod expectation;
pub mod expm;
pub mod heat;
pub mod model;
pub mod ode;
pub mod orthopoly;
pub mod scalar;
pub mod sde;

pub use error::{LabError, Result};
pub use model::{BoundaryFlag, Cluster, Family, InvTemp, ModelSpec, ParticleState};
pub use scalar::Real;

pub type Model = ModelSpec<f64>;
pub type State = ParticleState<f64>;
pub type Zeros = orthopoly::ZeroSet<f64>;
pub type Poly = heat::PolyRep<f64>;

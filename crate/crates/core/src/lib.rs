//! Capacity-based two-sided estimates for the bottom of the spectrum of
//! magnetic Schrödinger operators on lattices.

pub mod capacity;
pub mod carving;
pub mod diameter;
pub mod error;
pub mod fibered;
pub mod gauge;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod serde_f64;
pub mod spectrum;

pub use capacity::{CapacityConfig, CompactSet, EquilibriumPotential};
pub use carving::{CarvingConfig, CarvingResult, JointResult};
pub use diameter::{DiameterResult, PositivityCertificate};
pub use error::{Error, Result};
pub use fibered::{FiberCurve, FiberedProblem};
pub use problem::Problem;
pub use spectrum::{MagneticOperator, SpectralResult};
pub use grid::{CubeWindow, DomainMask, Lattice, ScalarField, VectorField};

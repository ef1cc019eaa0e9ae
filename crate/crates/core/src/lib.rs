//! Koopman-van Hove hybrid quantum-classical dynamics on periodic phase-space grids.
//!
//! The crate propagates hybrid wavefunctions Υ(q, p, x) (or Υ(q, p) ∈ ℂⁿ) under the
//! hybrid Liouvillian, extracts hybrid densities and Madelung diagnostics, and
//! integrates the Lie-Poisson closure model for (D, ρ̂, u).

pub mod closure;
pub mod densities;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod liouvillian;
pub mod madelung;
pub mod model;
pub mod propagator;
pub mod scenario;
pub mod states;
pub mod symbol;
pub mod trajectories;

pub use num_complex::Complex64 as C64;

pub use error::{Error, Result};
pub use grid::{Axis, Geometry, Mode, PhaseGrid};
pub use liouvillian::{HybridWavefunction, Liouvillian, PhaseConvention, PointTransform};
pub use model::{HybridHamiltonian, ModelParams};
pub use propagator::{Diagnostics, RunState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

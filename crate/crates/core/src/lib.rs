//! Numerical laboratory for the hypersurface Bohm-Dirac model.
//!
//! The crate is organised bottom-up:
//!
//! - [`clifford`]: gamma matrices, tensor embeddings, partial traces and the
//!   spinor representation of the Lorentz group.
//! - [`spacetime`]: Minkowski vectors, Lorentz matrices and configurations.
//! - [`wavefunction`]: exact multi-time Dirac solutions built from plane waves.
//! - [`foliation`]: spacelike leaves, their normals and leaf quadrature.
//! - [`hilbert`]: hypersurface scalar products.
//! - [`dynamics`]: integration of the guidance law across the foliation.
//! - [`subsystem`]: conditional density matrix, density operator and
//!   effective wave function.
//! - [`stats`]: rejection sampling from the crossing density and
//!   equivariance experiments.
//!
//! Natural units (c = ħ = 1) are used throughout. Particle indices are
//! zero-based and the tensor product is ordered with particle 0 as the most
//! significant spin slot.

pub mod clifford;
pub mod dynamics;
pub mod error;
pub mod foliation;
pub mod hilbert;
mod parallel;
pub mod spacetime;
pub mod stats;
pub mod subsystem;
pub mod wavefunction;

pub use error::{Error, Result};

/// Complex scalar used everywhere in the crate.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

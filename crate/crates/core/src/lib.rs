//! Bloch electrons in periodic potentials.
//!
//! Plane-wave band structure on the Bloch fibers, gauge-invariant band
//! geometry, Harper operators at rational flux, semiclassical and full
//! wave-packet dynamics, and adiabatic (piezoelectric) charge transport.

pub mod dynamics;
pub mod error;
mod fft;
pub mod fiber;
pub mod geometry;
pub mod lattice;
mod linalg;
pub mod magnetic;
pub mod potential;
pub mod pump;

pub use error::{Error, Result};
pub use lattice::{bz_grid, make_lattice, reduce_to_bz, KGrid, Lattice};
pub use potential::{potential_from_coeffs, FourierPotential, Interpolation, PumpPath};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

//! 2D incompressible Navier-Stokes on Taylor-Hood elements, built to measure
//! how the treatment of the convective nonlinearity affects discrete
//! conservation of energy, momentum, and angular momentum.
//!
//! The crate provides:
//! - uniform triangulations and the quadratic/linear mixed space ([`mesh`],
//!   [`fem`]),
//! - the five nonlinearity formulations, their Newton derivatives, and the
//!   antisymmetric linearization ([`forms`]),
//! - a direct saddle-point solver with strong Dirichlet conditions and a
//!   mean-zero pressure multiplier ([`saddle`]),
//! - Crank-Nicolson stepping under full Newton, fixed-count Newton, or the
//!   skew-symmetrized linearization ([`timeloop`]),
//! - conserved-quantity tracking and CSV output ([`diagnostics`]),
//! - the standing-vortex and vortex-lattice benchmarks with a CLI ([`bench`]).

pub mod bench;
pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod forms;
pub mod mesh;
pub mod saddle;
pub mod timeloop;

pub use error::{Error, Result};

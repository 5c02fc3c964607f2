//! Benchmark problems, the identity battery, and the command-line surface.

pub mod cli;
pub mod identities;
pub mod problems;
pub mod svg;
pub mod vtk;

pub use identities::{verify_identities, IdentityCheck, IdentityReport};
pub use problems::{gresho_exact, lattice_exact, Gresho, Lattice};

//! Reference-element bases, quadrature, the Taylor-Hood space, sparse
//! matrices, and assembly of the time-independent forms.

pub mod assemble;
pub mod basis;
pub mod quadrature;
pub mod space;
pub mod sparse;

pub use assemble::{
    assemble_div, assemble_graddiv, assemble_mass, assemble_stiffness, for_each_quad_point,
    integrate_fields, load_vector, pressure_mean_vector, QuadPoint, ASSEMBLY_DEGREE, ERROR_DEGREE,
};
pub use basis::{p1_basis_eval, p2_basis_eval};
pub use quadrature::QuadratureRule;
pub use space::{
    interpolate_pressure, interpolate_velocity, CellGeometry, FEFunction, FieldKind,
    TaylorHoodSpace,
};
pub use sparse::SparseMatrix;

//! Taylor-Hood space (quadratic vector velocity, linear pressure) and the
//! discrete fields living in it.
//!
//! Velocity DOFs are component-blocked: all x-components first, then all
//! y-components. Scalar velocity node `k` is vertex `k` for `k < nv` and the
//! midpoint of edge `k - nv` otherwise. Pressure DOFs are the vertices.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::basis::{p2_basis_eval_unchecked, BARY_GRADS};
use crate::mesh::TriMesh;

/// Per-cell affine geometry: physical gradients come from `inv_jt * ref_grad`.
#[derive(Clone, Copy, Debug)]
pub struct CellGeometry {
    /// Inverse-transpose of the affine map Jacobian.
    pub inv_jt: [[f64; 2]; 2],
    /// Determinant of the Jacobian (twice the cell area, positive).
    pub det: f64,
}

impl CellGeometry {
    #[inline]
    pub fn physical_grad(&self, ref_grad: [f64; 2]) -> [f64; 2] {
        [
            self.inv_jt[0][0] * ref_grad[0] + self.inv_jt[0][1] * ref_grad[1],
            self.inv_jt[1][0] * ref_grad[0] + self.inv_jt[1][1] * ref_grad[1],
        ]
    }
}

#[derive(Debug)]
pub struct TaylorHoodSpace {
    mesh: Arc<TriMesh>,
    geometry: Vec<CellGeometry>,
}

impl TaylorHoodSpace {
    pub fn new(mesh: Arc<TriMesh>) -> Self {
        let geometry = (0..mesh.num_cells())
            .map(|c| {
                let [a, b, cc] = mesh.cells[c];
                let pa = mesh.vertices[a];
                let pb = mesh.vertices[b];
                let pc = mesh.vertices[cc];
                let j = [[pb[0] - pa[0], pc[0] - pa[0]], [pb[1] - pa[1], pc[1] - pa[1]]];
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                let inv_jt = [
                    [j[1][1] / det, -j[1][0] / det],
                    [-j[0][1] / det, j[0][0] / det],
                ];
                CellGeometry { inv_jt, det }
            })
            .collect();
        TaylorHoodSpace { mesh, geometry }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn num_scalar_nodes(&self) -> usize {
        self.mesh.num_vertices() + self.mesh.num_edges()
    }

    pub fn num_velocity_dofs(&self) -> usize {
        2 * self.num_scalar_nodes()
    }

    pub fn num_pressure_dofs(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// Velocity DOF index of a scalar node and component.
    #[inline]
    pub fn velocity_dof(&self, node: usize, comp: usize) -> usize {
        comp * self.num_scalar_nodes() + node
    }

    /// The six scalar velocity nodes of a cell: its vertices, then its edge
    /// midpoints in local edge order.
    #[inline]
    pub fn cell_velocity_nodes(&self, cell: usize) -> [usize; 6] {
        let [a, b, c] = self.mesh.cells[cell];
        let [e0, e1, e2] = self.mesh.cell_edges[cell];
        let nv = self.mesh.num_vertices();
        [a, b, c, nv + e0, nv + e1, nv + e2]
    }

    /// The twelve velocity DOFs of a cell, x-components then y-components.
    pub fn cell_velocity_dofs(&self, cell: usize) -> [usize; 12] {
        let nodes = self.cell_velocity_nodes(cell);
        let mut dofs = [0usize; 12];
        for comp in 0..2 {
            for (k, &n) in nodes.iter().enumerate() {
                dofs[comp * 6 + k] = self.velocity_dof(n, comp);
            }
        }
        dofs
    }

    pub fn cell_pressure_dofs(&self, cell: usize) -> [usize; 3] {
        self.mesh.cells[cell]
    }

    pub fn node_position(&self, node: usize) -> [f64; 2] {
        let nv = self.mesh.num_vertices();
        if node < nv {
            self.mesh.vertices[node]
        } else {
            self.mesh.edge_midpoint(node - nv)
        }
    }

    #[inline]
    pub fn cell_geometry(&self, cell: usize) -> &CellGeometry {
        &self.geometry[cell]
    }

    /// Physical coordinates of a barycentric point in a cell.
    pub fn cell_point(&self, cell: usize, bary: &[f64; 3]) -> [f64; 2] {
        let [a, b, c] = self.mesh.cells[cell];
        let (pa, pb, pc) = (
            self.mesh.vertices[a],
            self.mesh.vertices[b],
            self.mesh.vertices[c],
        );
        [
            bary[0] * pa[0] + bary[1] * pb[0] + bary[2] * pc[0],
            bary[0] * pa[1] + bary[1] * pb[1] + bary[2] * pc[1],
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

/// A finite element function: a coefficient vector over a space.
#[derive(Clone, Debug)]
pub struct FEFunction {
    space: Arc<TaylorHoodSpace>,
    kind: FieldKind,
    coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<TaylorHoodSpace>, kind: FieldKind, coeffs: Vec<f64>) -> Result<Self> {
        let want = match kind {
            FieldKind::Velocity => space.num_velocity_dofs(),
            FieldKind::Pressure => space.num_pressure_dofs(),
        };
        if coeffs.len() != want {
            return Err(Error::invalid(format!(
                "coefficient length {} does not match {kind:?} space of dimension {want}",
                coeffs.len()
            )));
        }
        Ok(FEFunction { space, kind, coeffs })
    }

    pub fn zeros(space: Arc<TaylorHoodSpace>, kind: FieldKind) -> Self {
        let n = match kind {
            FieldKind::Velocity => space.num_velocity_dofs(),
            FieldKind::Pressure => space.num_pressure_dofs(),
        };
        FEFunction {
            space,
            kind,
            coeffs: vec![0.0; n],
        }
    }

    pub fn space(&self) -> &Arc<TaylorHoodSpace> {
        &self.space
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn same_space(&self, other: &FEFunction) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    /// Velocity value and physical gradient at a barycentric point of a cell.
    /// `grad[i][j]` is the derivative of component i along direction j.
    pub fn velocity_at(&self, cell: usize, bary: [f64; 3]) -> ([f64; 2], [[f64; 2]; 2]) {
        debug_assert_eq!(self.kind, FieldKind::Velocity);
        let (vals, ref_grads) = p2_basis_eval_unchecked(bary);
        let geo = self.space.cell_geometry(cell);
        let nodes = self.space.cell_velocity_nodes(cell);
        let mut value = [0.0; 2];
        let mut grad = [[0.0; 2]; 2];
        for (k, &node) in nodes.iter().enumerate() {
            let g = geo.physical_grad(ref_grads[k]);
            for comp in 0..2 {
                let c = self.coeffs[self.space.velocity_dof(node, comp)];
                value[comp] += c * vals[k];
                grad[comp][0] += c * g[0];
                grad[comp][1] += c * g[1];
            }
        }
        (value, grad)
    }

    /// Pressure value at a barycentric point of a cell.
    pub fn pressure_at(&self, cell: usize, bary: [f64; 3]) -> f64 {
        debug_assert_eq!(self.kind, FieldKind::Pressure);
        let verts = self.space.cell_pressure_dofs(cell);
        (0..3).map(|i| self.coeffs[verts[i]] * bary[i]).sum()
    }

    /// Pressure gradient (constant per cell).
    pub fn pressure_grad(&self, cell: usize) -> [f64; 2] {
        debug_assert_eq!(self.kind, FieldKind::Pressure);
        let verts = self.space.cell_pressure_dofs(cell);
        let geo = self.space.cell_geometry(cell);
        let mut g = [0.0; 2];
        for i in 0..3 {
            let pg = geo.physical_grad(BARY_GRADS[i]);
            g[0] += self.coeffs[verts[i]] * pg[0];
            g[1] += self.coeffs[verts[i]] * pg[1];
        }
        g
    }
}

/// Nodal interpolant of a pointwise velocity field.
pub fn interpolate_velocity(
    space: &Arc<TaylorHoodSpace>,
    f: impl Fn(f64, f64) -> [f64; 2],
) -> FEFunction {
    let n = space.num_scalar_nodes();
    let mut coeffs = vec![0.0; 2 * n];
    for node in 0..n {
        let [x, y] = space.node_position(node);
        let v = f(x, y);
        coeffs[node] = v[0];
        coeffs[n + node] = v[1];
    }
    FEFunction {
        space: Arc::clone(space),
        kind: FieldKind::Velocity,
        coeffs,
    }
}

/// Nodal interpolant of a pointwise pressure field.
pub fn interpolate_pressure(
    space: &Arc<TaylorHoodSpace>,
    f: impl Fn(f64, f64) -> f64,
) -> FEFunction {
    let nv = space.num_pressure_dofs();
    let mut coeffs = vec![0.0; nv];
    for (v, c) in coeffs.iter_mut().enumerate() {
        let [x, y] = space.mesh().vertices[v];
        *c = f(x, y);
    }
    FEFunction {
        space: Arc::clone(space),
        kind: FieldKind::Pressure,
        coeffs,
    }
}

//! Assembly of the bilinear forms over a Taylor-Hood space, plus a generic
//! cell-quadrature driver used by diagnostics and the identity checks.
//!
//! System matrices use the degree-5 rule, which integrates every product of
//! Taylor-Hood shape functions appearing here exactly.

use std::sync::Arc;

use crate::error::Result;
use crate::fem::basis::p2_basis_eval_unchecked;
use crate::fem::quadrature::QuadratureRule;
use crate::fem::space::{FEFunction, TaylorHoodSpace};
use crate::fem::sparse::SparseMatrix;

/// Quadrature degree used for all system assembly.
pub const ASSEMBLY_DEGREE: usize = 5;
/// Quadrature degree used for error integrals against non-polynomial fields.
pub const ERROR_DEGREE: usize = 8;

/// Data handed to quadrature-point callbacks.
pub struct QuadPoint<'a> {
    pub cell: usize,
    /// Physical coordinates of the point.
    pub x: [f64; 2],
    /// Quadrature weight including the cell Jacobian.
    pub w: f64,
    /// Values of the six quadratic basis functions.
    pub vals: &'a [f64; 6],
    /// Physical gradients of the six quadratic basis functions.
    pub grads: &'a [[f64; 2]; 6],
    /// Barycentric coordinates.
    pub bary: &'a [f64; 3],
}

/// Runs `f` at every quadrature point of every cell, with basis data
/// evaluated in physical coordinates. Cells are visited in order, so any
/// accumulation done by the callback is deterministic.
pub fn for_each_quad_point(
    space: &TaylorHoodSpace,
    rule: &QuadratureRule,
    mut f: impl FnMut(&QuadPoint),
) {
    let ref_data: Vec<([f64; 6], [[f64; 2]; 6], [f64; 3])> = rule
        .points()
        .iter()
        .map(|&b| {
            let (v, g) = p2_basis_eval_unchecked(b);
            (v, g, b)
        })
        .collect();
    let nc = space.mesh().num_cells();
    for cell in 0..nc {
        let geo = space.cell_geometry(cell);
        for ((vals, ref_grads, bary), &w_ref) in ref_data.iter().zip(rule.weights()) {
            let mut grads = [[0.0; 2]; 6];
            for k in 0..6 {
                grads[k] = geo.physical_grad(ref_grads[k]);
            }
            let x = space.cell_point(cell, bary);
            f(&QuadPoint {
                cell,
                x,
                w: w_ref * geo.det,
                vals,
                grads: &grads,
                bary,
            });
        }
    }
}

/// Integrates `g(point, velocity values, velocity gradients, pressure values)`
/// over the mesh, evaluating the given fields at each quadrature point. This
/// is the evaluation-path integrator: it never touches assembled operators,
/// so it can serve as an independent check on them.
pub fn integrate_fields(
    space: &TaylorHoodSpace,
    degree: usize,
    velocities: &[&FEFunction],
    pressures: &[&FEFunction],
    mut g: impl FnMut(&[f64; 2], &[[f64; 2]], &[[[f64; 2]; 2]], &[f64]) -> f64,
) -> Result<f64> {
    let rule = QuadratureRule::with_min_degree(degree)?;
    let mut vals = vec![[0.0; 2]; velocities.len()];
    let mut grads = vec![[[0.0; 2]; 2]; velocities.len()];
    let mut pvals = vec![0.0; pressures.len()];
    let mut total = 0.0;
    for_each_quad_point(space, &rule, |qp| {
        for (i, u) in velocities.iter().enumerate() {
            let (v, gr) = u.velocity_at(qp.cell, *qp.bary);
            vals[i] = v;
            grads[i] = gr;
        }
        for (i, p) in pressures.iter().enumerate() {
            pvals[i] = p.pressure_at(qp.cell, *qp.bary);
        }
        total += qp.w * g(&qp.x, &vals, &grads, &pvals);
    });
    Ok(total)
}

/// Velocity mass matrix, entries (phi_j, phi_i) per component.
pub fn assemble_mass(space: &Arc<TaylorHoodSpace>) -> SparseMatrix {
    let n = space.num_velocity_dofs();
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE).unwrap();
    let mut triplets = Vec::with_capacity(space.mesh().num_cells() * 72);
    let mut local = [[0.0f64; 6]; 6];
    per_cell_scalar(space, &rule, &mut local, |qp, local| {
        for i in 0..6 {
            for j in 0..6 {
                local[i][j] += qp.w * qp.vals[i] * qp.vals[j];
            }
        }
    }, |cell, local| {
        let nodes = space.cell_velocity_nodes(cell);
        for comp in 0..2 {
            for i in 0..6 {
                for j in 0..6 {
                    triplets.push((
                        space.velocity_dof(nodes[i], comp),
                        space.velocity_dof(nodes[j], comp),
                        local[i][j],
                    ));
                }
            }
        }
    });
    SparseMatrix::from_triplets(n, n, &triplets).unwrap()
}

/// Velocity stiffness matrix, entries (grad phi_j, grad phi_i), without the
/// viscosity factor.
pub fn assemble_stiffness(space: &Arc<TaylorHoodSpace>) -> SparseMatrix {
    let n = space.num_velocity_dofs();
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE).unwrap();
    let mut triplets = Vec::with_capacity(space.mesh().num_cells() * 72);
    let mut local = [[0.0f64; 6]; 6];
    per_cell_scalar(space, &rule, &mut local, |qp, local| {
        for i in 0..6 {
            for j in 0..6 {
                local[i][j] += qp.w
                    * (qp.grads[i][0] * qp.grads[j][0] + qp.grads[i][1] * qp.grads[j][1]);
            }
        }
    }, |cell, local| {
        let nodes = space.cell_velocity_nodes(cell);
        for comp in 0..2 {
            for i in 0..6 {
                for j in 0..6 {
                    triplets.push((
                        space.velocity_dof(nodes[i], comp),
                        space.velocity_dof(nodes[j], comp),
                        local[i][j],
                    ));
                }
            }
        }
    });
    SparseMatrix::from_triplets(n, n, &triplets).unwrap()
}

/// Divergence coupling: pressure rows, velocity columns, entries
/// (div phi_j, psi_i).
pub fn assemble_div(space: &Arc<TaylorHoodSpace>) -> SparseMatrix {
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE).unwrap();
    let mut triplets = Vec::with_capacity(space.mesh().num_cells() * 36);
    let mut local = [[[0.0f64; 2]; 6]; 3]; // [pressure i][velocity node j][component]
    let mut current = usize::MAX;
    for_each_quad_point(space, &rule, |qp| {
        if qp.cell != current {
            if current != usize::MAX {
                flush_div(space, current, &local, &mut triplets);
            }
            local = [[[0.0; 2]; 6]; 3];
            current = qp.cell;
        }
        for i in 0..3 {
            let psi = qp.bary[i];
            for j in 0..6 {
                for comp in 0..2 {
                    local[i][j][comp] += qp.w * psi * qp.grads[j][comp];
                }
            }
        }
    });
    if current != usize::MAX {
        flush_div(space, current, &local, &mut triplets);
    }
    SparseMatrix::from_triplets(space.num_pressure_dofs(), space.num_velocity_dofs(), &triplets)
        .unwrap()
}

fn flush_div(
    space: &TaylorHoodSpace,
    cell: usize,
    local: &[[[f64; 2]; 6]; 3],
    triplets: &mut Vec<(usize, usize, f64)>,
) {
    let nodes = space.cell_velocity_nodes(cell);
    let prs = space.cell_pressure_dofs(cell);
    for i in 0..3 {
        for j in 0..6 {
            for comp in 0..2 {
                triplets.push((prs[i], space.velocity_dof(nodes[j], comp), local[i][j][comp]));
            }
        }
    }
}

/// Grad-div matrix, entries (div phi_j, div phi_i); couples components.
pub fn assemble_graddiv(space: &Arc<TaylorHoodSpace>) -> SparseMatrix {
    let n = space.num_velocity_dofs();
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE).unwrap();
    let mut triplets = Vec::with_capacity(space.mesh().num_cells() * 144);
    let mut local = [[0.0f64; 12]; 12];
    let mut current = usize::MAX;
    for_each_quad_point(space, &rule, |qp| {
        if qp.cell != current {
            if current != usize::MAX {
                flush_vel_block(space, current, &local, &mut triplets);
            }
            local = [[0.0; 12]; 12];
            current = qp.cell;
        }
        // div(phi_j e_b) = d_b phi_j
        for a in 0..2 {
            for i in 0..6 {
                let di = qp.grads[i][a];
                for b in 0..2 {
                    for j in 0..6 {
                        local[a * 6 + i][b * 6 + j] += qp.w * di * qp.grads[j][b];
                    }
                }
            }
        }
    });
    if current != usize::MAX {
        flush_vel_block(space, current, &local, &mut triplets);
    }
    SparseMatrix::from_triplets(n, n, &triplets).unwrap()
}

pub(crate) fn flush_vel_block(
    space: &TaylorHoodSpace,
    cell: usize,
    local: &[[f64; 12]; 12],
    triplets: &mut Vec<(usize, usize, f64)>,
) {
    let dofs = space.cell_velocity_dofs(cell);
    for i in 0..12 {
        for j in 0..12 {
            triplets.push((dofs[i], dofs[j], local[i][j]));
        }
    }
}

/// Load vector (f, phi_i e_c) for a pointwise forcing field.
pub fn load_vector(
    space: &TaylorHoodSpace,
    degree: usize,
    f: impl Fn(f64, f64) -> [f64; 2],
) -> Result<Vec<f64>> {
    let rule = QuadratureRule::with_min_degree(degree)?;
    let n = space.num_velocity_dofs();
    let mut rhs = vec![0.0; n];
    for_each_quad_point(space, &rule, |qp| {
        let fv = f(qp.x[0], qp.x[1]);
        let nodes = space.cell_velocity_nodes(qp.cell);
        for (k, &node) in nodes.iter().enumerate() {
            for comp in 0..2 {
                rhs[space.velocity_dof(node, comp)] += qp.w * fv[comp] * qp.vals[k];
            }
        }
    });
    Ok(rhs)
}

/// Pressure-basis integrals (psi_i, 1), the mean-constraint row.
pub fn pressure_mean_vector(space: &TaylorHoodSpace) -> Vec<f64> {
    let rule = QuadratureRule::with_min_degree(2).unwrap();
    let mut c = vec![0.0; space.num_pressure_dofs()];
    for_each_quad_point(space, &rule, |qp| {
        let prs = space.cell_pressure_dofs(qp.cell);
        for i in 0..3 {
            c[prs[i]] += qp.w * qp.bary[i];
        }
    });
    c
}

// Drives a per-quad-point accumulation into a 6x6 scalar local matrix and a
// per-cell flush; shared by the component-diagonal assemblies.
fn per_cell_scalar(
    space: &TaylorHoodSpace,
    rule: &QuadratureRule,
    local: &mut [[f64; 6]; 6],
    mut accumulate: impl FnMut(&QuadPoint, &mut [[f64; 6]; 6]),
    mut flush: impl FnMut(usize, &[[f64; 6]; 6]),
) {
    let mut current = usize::MAX;
    for_each_quad_point(space, rule, |qp| {
        if qp.cell != current {
            if current != usize::MAX {
                flush(current, local);
            }
            *local = [[0.0; 6]; 6];
            current = qp.cell;
        }
        accumulate(qp, local);
    });
    if current != usize::MAX {
        flush(current, local);
    }
}

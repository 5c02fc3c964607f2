//! The convective nonlinearity in its five formulations, their Gateaux
//! derivatives, and the skew-symmetrized linearization operator.
//!
//! With `g = grad u` (g[i][j] = d u_i / d x_j) the residual integrands are:
//!
//! - convective: (g) u
//! - skew-symmetric: (g) u + (div u) u / 2
//! - conservative: (g) u + (div u) u
//! - rotational: (curl u) x u
//! - energy-momentum-angular-momentum conserving: (g + g^T) u + (div u) u
//!
//! All quadrature uses the degree-5 rule, which is exact for these
//! integrands, so the integration-by-parts identities hold to roundoff at
//! the discrete level.

use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::assemble::{for_each_quad_point, ASSEMBLY_DEGREE};
use crate::fem::quadrature::QuadratureRule;
use crate::fem::space::{FEFunction, FieldKind, TaylorHoodSpace};
use crate::fem::sparse::SparseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    Emac,
    Conv,
    Skew,
    Cons,
    Rot,
}

impl Formulation {
    pub const ALL: [Formulation; 5] = [
        Formulation::Emac,
        Formulation::Conv,
        Formulation::Skew,
        Formulation::Cons,
        Formulation::Rot,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Emac => "emac",
            Formulation::Conv => "conv",
            Formulation::Skew => "skew",
            Formulation::Cons => "cons",
            Formulation::Rot => "rot",
        }
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emac" => Ok(Formulation::Emac),
            "conv" => Ok(Formulation::Conv),
            "skew" => Ok(Formulation::Skew),
            "cons" => Ok(Formulation::Cons),
            "rot" => Ok(Formulation::Rot),
            other => Err(Error::invalid(format!("unknown formulation '{other}'"))),
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Residual and optional Jacobian of the nonlinearity at a velocity state.
pub struct NonlinearTermEval {
    pub residual: Vec<f64>,
    pub jacobian: Option<SparseMatrix>,
}

#[inline]
fn nl_value(form: Formulation, u: &[f64; 2], g: &[[f64; 2]; 2]) -> [f64; 2] {
    let conv = [
        g[0][0] * u[0] + g[0][1] * u[1],
        g[1][0] * u[0] + g[1][1] * u[1],
    ];
    let div = g[0][0] + g[1][1];
    match form {
        Formulation::Conv => conv,
        Formulation::Skew => [conv[0] + 0.5 * div * u[0], conv[1] + 0.5 * div * u[1]],
        Formulation::Cons => [conv[0] + div * u[0], conv[1] + div * u[1]],
        Formulation::Rot => {
            let curl = g[1][0] - g[0][1];
            [-curl * u[1], curl * u[0]]
        }
        Formulation::Emac => [
            conv[0] + g[0][0] * u[0] + g[1][0] * u[1] + div * u[0],
            conv[1] + g[0][1] * u[0] + g[1][1] * u[1] + div * u[1],
        ],
    }
}

/// Derivative of the nonlinearity at (u, g) in the direction of the field
/// `phi * e_b` with scalar value `phi` and gradient `dphi`.
#[inline]
fn nl_derivative(
    form: Formulation,
    u: &[f64; 2],
    g: &[[f64; 2]; 2],
    phi: f64,
    dphi: &[f64; 2],
    b: usize,
) -> [f64; 2] {
    let div_u = g[0][0] + g[1][1];
    let div_w = dphi[b];
    let dphi_dot_u = dphi[0] * u[0] + dphi[1] * u[1];
    // (grad u) w + (grad w) u
    let mut out = [g[0][b] * phi, g[1][b] * phi];
    out[b] += dphi_dot_u;
    match form {
        Formulation::Conv => {}
        Formulation::Skew => {
            out[0] += 0.5 * (div_u * phi * ((b == 0) as usize as f64) + div_w * u[0]);
            out[1] += 0.5 * (div_u * phi * ((b == 1) as usize as f64) + div_w * u[1]);
        }
        Formulation::Cons => {
            out[0] += div_u * phi * ((b == 0) as usize as f64) + div_w * u[0];
            out[1] += div_u * phi * ((b == 1) as usize as f64) + div_w * u[1];
        }
        Formulation::Rot => {
            let curl_u = g[1][0] - g[0][1];
            let curl_w = if b == 1 { dphi[0] } else { -dphi[1] };
            out = [
                -curl_w * u[1] - curl_u * phi * ((b == 1) as usize as f64),
                curl_w * u[0] + curl_u * phi * ((b == 0) as usize as f64),
            ];
        }
        Formulation::Emac => {
            // add (grad w)^T u + (grad u)^T w + (div u) w + (div w) u
            out[0] += dphi[0] * u[b] + g[b][0] * phi;
            out[1] += dphi[1] * u[b] + g[b][1] * phi;
            out[b] += div_u * phi;
            out[0] += div_w * u[0];
            out[1] += div_w * u[1];
        }
    }
    out
}

fn require_velocity(u: &FEFunction) -> Result<()> {
    if u.kind() != FieldKind::Velocity {
        return Err(Error::invalid("expected a velocity field"));
    }
    Ok(())
}

/// Entries (NL(u), phi_i) of the chosen nonlinearity.
pub fn nl_residual(form: Formulation, u: &FEFunction) -> Result<Vec<f64>> {
    require_velocity(u)?;
    let space = u.space();
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE)?;
    let mut out = vec![0.0; space.num_velocity_dofs()];
    for_each_quad_point(space, &rule, |qp| {
        let (uv, gu) = u.velocity_at(qp.cell, *qp.bary);
        let nl = nl_value(form, &uv, &gu);
        let nodes = space.cell_velocity_nodes(qp.cell);
        for (a, &node) in nodes.iter().enumerate() {
            let wphi = qp.w * qp.vals[a];
            out[space.velocity_dof(node, 0)] += wphi * nl[0];
            out[space.velocity_dof(node, 1)] += wphi * nl[1];
        }
    });
    Ok(out)
}

/// Runs `emit(cell, w_local, nl_local)` over all cells, where `w_local` is
/// the local Gateaux-derivative matrix of the nonlinearity at `u_star` and
/// `nl_local` the local residual entries (NL(u_star), phi). Local indices
/// are component-blocked to match `cell_velocity_dofs`.
pub(crate) fn for_each_newton_cell(
    form: Formulation,
    u_star: &FEFunction,
    mut emit: impl FnMut(usize, &[[f64; 12]; 12], &[f64; 12]),
) {
    let space = u_star.space();
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE).unwrap();
    let mut w_local = [[0.0f64; 12]; 12];
    let mut nl_local = [0.0f64; 12];
    let mut current = usize::MAX;
    for_each_quad_point(space, &rule, |qp| {
        if qp.cell != current {
            if current != usize::MAX {
                emit(current, &w_local, &nl_local);
            }
            w_local = [[0.0; 12]; 12];
            nl_local = [0.0; 12];
            current = qp.cell;
        }
        let (uv, gu) = u_star.velocity_at(qp.cell, *qp.bary);
        let nl = nl_value(form, &uv, &gu);
        for a in 0..6 {
            let wphi = qp.w * qp.vals[a];
            nl_local[a] += wphi * nl[0];
            nl_local[6 + a] += wphi * nl[1];
        }
        for b in 0..2 {
            for j in 0..6 {
                let d = nl_derivative(form, &uv, &gu, qp.vals[j], &qp.grads[j], b);
                let col = b * 6 + j;
                for a in 0..6 {
                    let wphi = qp.w * qp.vals[a];
                    w_local[a][col] += wphi * d[0];
                    w_local[6 + a][col] += wphi * d[1];
                }
            }
        }
    });
    if current != usize::MAX {
        emit(current, &w_local, &nl_local);
    }
}

/// Gateaux derivative of the nonlinearity at `u_lin`, as a sparse matrix.
pub fn nl_jacobian(form: Formulation, u_lin: &FEFunction) -> Result<SparseMatrix> {
    require_velocity(u_lin)?;
    let space = u_lin.space();
    let n = space.num_velocity_dofs();
    let mut triplets = Vec::with_capacity(space.mesh().num_cells() * 144);
    for_each_newton_cell(form, u_lin, |cell, w_local, _| {
        crate::fem::assemble::flush_vel_block(space, cell, w_local, &mut triplets);
    });
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// Local assembly of the skew-symmetrized linearization at `u_star`:
/// row (a,c), column (j,b) carries
/// `b(phi_a e_c, phi_j e_b, u*) - b(phi_j e_b, phi_a e_c, u*)`,
/// which is antisymmetric even pointwise.
pub(crate) fn for_each_skew_cell(
    u_star: &FEFunction,
    mut emit: impl FnMut(usize, &[[f64; 12]; 12]),
) {
    let space = u_star.space();
    let rule = QuadratureRule::with_min_degree(ASSEMBLY_DEGREE).unwrap();
    let mut local = [[0.0f64; 12]; 12];
    let mut current = usize::MAX;
    for_each_quad_point(space, &rule, |qp| {
        if qp.cell != current {
            if current != usize::MAX {
                emit(current, &local);
            }
            local = [[0.0; 12]; 12];
            current = qp.cell;
        }
        let (us, _) = u_star.velocity_at(qp.cell, *qp.bary);
        for c in 0..2 {
            for a in 0..6 {
                let row = c * 6 + a;
                for b in 0..2 {
                    for j in 0..6 {
                        let v = us[b] * qp.vals[a] * qp.grads[j][c]
                            - us[c] * qp.vals[j] * qp.grads[a][b];
                        local[row][b * 6 + j] += qp.w * v;
                    }
                }
            }
        }
    });
    if current != usize::MAX {
        emit(current, &local);
    }
}

/// The skew-symmetrized linearization operator at `u_star`; exactly
/// antisymmetric, so it contributes nothing to the energy balance.
pub fn skew_linearized_matrix(u_star: &FEFunction) -> Result<SparseMatrix> {
    require_velocity(u_star)?;
    let space = u_star.space();
    let n = space.num_velocity_dofs();
    let mut triplets = Vec::with_capacity(space.mesh().num_cells() * 144);
    for_each_skew_cell(u_star, |cell, local| {
        crate::fem::assemble::flush_vel_block(space, cell, local, &mut triplets);
    });
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// Quadratic correction vector moved to the right-hand side of the
/// Newton-linearized step; identical to the full nonlinear residual at
/// `u_star`.
pub fn emac_newton_rhs_correction(u_star: &FEFunction) -> Result<Vec<f64>> {
    nl_residual(Formulation::Emac, u_star)
}

/// The trilinear convection form (u . grad v, w).
pub fn trilinear_b(u: &FEFunction, v: &FEFunction, w: &FEFunction) -> Result<f64> {
    require_velocity(u)?;
    require_velocity(v)?;
    require_velocity(w)?;
    if !u.same_space(v) || !u.same_space(w) {
        return Err(Error::invalid("trilinear form arguments live in different spaces"));
    }
    crate::fem::assemble::integrate_fields(
        u.space(),
        ASSEMBLY_DEGREE,
        &[u, v, w],
        &[],
        |_, vals, grads, _| {
            let (uu, gv, ww) = (&vals[0], &grads[1], &vals[2]);
            let conv = [
                gv[0][0] * uu[0] + gv[0][1] * uu[1],
                gv[1][0] * uu[0] + gv[1][1] * uu[1],
            ];
            conv[0] * ww[0] + conv[1] * ww[1]
        },
    )
}

/// Interior-restricted interpolant of the constant field e_comp: the nodal
/// interpolant with every boundary-node DOF zeroed.
pub fn restricted_constant(space: &Arc<TaylorHoodSpace>, comp: usize) -> FEFunction {
    let mut f = crate::fem::space::interpolate_velocity(space, |_, _| {
        let mut v = [0.0; 2];
        v[comp] = 1.0;
        v
    });
    zero_boundary_nodes(&mut f);
    f
}

/// Interior-restricted interpolant of the rotational field (y, -x); the
/// quadratic interpolant of a linear field is exact away from the zeroed
/// boundary strip.
pub fn restricted_rotation(space: &Arc<TaylorHoodSpace>) -> FEFunction {
    let mut f = crate::fem::space::interpolate_velocity(space, |x, y| [y, -x]);
    zero_boundary_nodes(&mut f);
    f
}

/// Zeroes every velocity DOF sitting on a boundary node.
pub fn zero_boundary_nodes(u: &mut FEFunction) {
    let space = Arc::clone(u.space());
    let dofs = crate::mesh::boundary_dofs(space.mesh(), &space).unwrap();
    for d in dofs {
        u.coeffs_mut()[d] = 0.0;
    }
}

/// Zeroes every velocity DOF of every node belonging to a boundary-adjacent
/// cell, leaving a field supported strictly away from the one-element strip.
pub fn zero_boundary_strip(u: &mut FEFunction) {
    let space = Arc::clone(u.space());
    let mesh = space.mesh();
    for cell in 0..mesh.num_cells() {
        let touches = mesh.cells[cell].iter().any(|&v| mesh.boundary_vertex[v]);
        if touches {
            for node in space.cell_velocity_nodes(cell) {
                u.coeffs_mut()[space.velocity_dof(node, 0)] = 0.0;
                u.coeffs_mut()[space.velocity_dof(node, 1)] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble::integrate_fields;
    use crate::fem::space::interpolate_velocity;
    use crate::mesh::{build_uniform_tri_mesh, Rect};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn space(nx: usize) -> Arc<TaylorHoodSpace> {
        let mesh = Arc::new(build_uniform_tri_mesh(nx, nx, Rect::unit()).unwrap());
        Arc::new(TaylorHoodSpace::new(mesh))
    }

    fn random_velocity(space: &Arc<TaylorHoodSpace>, rng: &mut impl Rng) -> FEFunction {
        let coeffs: Vec<f64> = (0..space.num_velocity_dofs())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        FEFunction::new(Arc::clone(space), FieldKind::Velocity, coeffs).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn trilinear_constant_v_vanishes() {
        let s = space(3);
        let u = interpolate_velocity(&s, |x, y| [x + y, x * y]);
        let v = interpolate_velocity(&s, |_, _| [2.0, -1.0]);
        let w = interpolate_velocity(&s, |x, _| [x, 1.0]);
        let b = trilinear_b(&u, &v, &w).unwrap();
        assert!(b.abs() <= 1e-14, "{b}");
    }

    #[test]
    fn trilinear_hand_values() {
        let s = space(4);
        let u = interpolate_velocity(&s, |x, _| [x, 0.0]);
        let v = interpolate_velocity(&s, |x, y| [y, x]);
        let w1 = interpolate_velocity(&s, |_, _| [1.0, 0.0]);
        let w2 = interpolate_velocity(&s, |_, _| [0.0, 1.0]);
        // u . grad v = x d/dx (y, x) = (0, x)
        assert!(trilinear_b(&u, &v, &w1).unwrap().abs() <= 1e-14);
        let b2 = trilinear_b(&u, &v, &w2).unwrap();
        assert!((b2 - 0.5).abs() <= 1e-13, "{b2}");
    }

    #[test]
    fn trilinear_space_mismatch_rejected() {
        let s1 = space(2);
        let s2 = space(2);
        let u = interpolate_velocity(&s1, |_, _| [1.0, 0.0]);
        let v = interpolate_velocity(&s2, |_, _| [1.0, 0.0]);
        assert!(trilinear_b(&u, &v, &v).is_err());
    }

    #[test]
    fn residuals_vanish_at_zero() {
        let s = space(3);
        let zero = FEFunction::zeros(Arc::clone(&s), FieldKind::Velocity);
        for form in Formulation::ALL {
            let r = nl_residual(form, &zero).unwrap();
            assert!(r.iter().all(|&v| v == 0.0), "{form}");
        }
    }

    #[test]
    fn emac_and_skew_residuals_annihilate_their_state() {
        let s = space(4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let u = random_velocity(&s, &mut rng);
            for form in [Formulation::Emac, Formulation::Skew] {
                let r = nl_residual(form, &u).unwrap();
                let e = dot(&r, u.coeffs());
                let scale: f64 = r.iter().zip(u.coeffs()).map(|(a, b)| (a * b).abs()).sum();
                assert!(e.abs() <= 1e-12 * scale.max(1.0), "{form}: {e} vs scale {scale}");
            }
        }
    }

    #[test]
    fn conv_residual_energy_matches_divergence_integral() {
        let s = space(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut u = random_velocity(&s, &mut rng);
            zero_boundary_nodes(&mut u);
            let r = nl_residual(Formulation::Conv, &u).unwrap();
            let lhs = dot(&r, u.coeffs());
            let rhs = integrate_fields(&s, ASSEMBLY_DEGREE, &[&u], &[], |_, vals, grads, _| {
                let div = grads[0][0][0] + grads[0][1][1];
                -0.5 * div * (vals[0][0] * vals[0][0] + vals[0][1] * vals[0][1])
            })
            .unwrap();
            assert!(rhs.abs() > 1e-6, "degenerate random field");
            assert!(
                (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let s = space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for form in Formulation::ALL {
            for _ in 0..2 {
                let u = random_velocity(&s, &mut rng);
                let w = random_velocity(&s, &mut rng);
                let j = nl_jacobian(form, &u).unwrap();
                let jw = j.matvec(w.coeffs());
                let mut slopes = Vec::new();
                for eps in [1e-2, 1e-3] {
                    let up = FEFunction::new(
                        Arc::clone(&s),
                        FieldKind::Velocity,
                        u.coeffs()
                            .iter()
                            .zip(w.coeffs())
                            .map(|(a, b)| a + eps * b)
                            .collect(),
                    )
                    .unwrap();
                    let rp = nl_residual(form, &up).unwrap();
                    let r0 = nl_residual(form, &u).unwrap();
                    let err: f64 = rp
                        .iter()
                        .zip(&r0)
                        .zip(&jw)
                        .map(|((a, b), c)| ((a - b) / eps - c).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    slopes.push(err);
                }
                // quadratic nonlinearity: the finite-difference defect is linear in eps
                let order = (slopes[0] / slopes[1]).log10();
                assert!(
                    (order - 1.0).abs() <= 0.1,
                    "{form}: observed order {order} (defects {slopes:?})"
                );
            }
        }
    }

    #[test]
    fn jacobian_at_zero_vanishes() {
        let s = space(2);
        let zero = FEFunction::zeros(Arc::clone(&s), FieldKind::Velocity);
        for form in Formulation::ALL {
            let j = nl_jacobian(form, &zero).unwrap();
            let ones = vec![1.0; s.num_velocity_dofs()];
            assert!(j.matvec(&ones).iter().all(|&v| v.abs() <= 1e-15), "{form}");
        }
    }

    #[test]
    fn jacobian_euler_identity_for_quadratic_map() {
        let s = space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for form in Formulation::ALL {
            let u = random_velocity(&s, &mut rng);
            let j = nl_jacobian(form, &u).unwrap();
            let ju = j.matvec(u.coeffs());
            let r = nl_residual(form, &u).unwrap();
            for (a, b) in ju.iter().zip(&r) {
                assert!((a - 2.0 * b).abs() <= 1e-11 * b.abs().max(1.0), "{form}: {a} vs 2*{b}");
            }
        }
    }

    #[test]
    fn skew_operator_is_antisymmetric() {
        let s = space(4);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let u_star = random_velocity(&s, &mut rng);
        let l = skew_linearized_matrix(&u_star).unwrap();
        assert!(l.max_asymmetry_skew() <= 1e-13);
        for _ in 0..100 {
            let w = random_velocity(&s, &mut rng);
            let q = l.bilinear(w.coeffs(), w.coeffs());
            let scale: f64 = l
                .matvec(w.coeffs())
                .iter()
                .zip(w.coeffs())
                .map(|(a, b)| (a * b).abs())
                .sum();
            assert!(q.abs() <= 1e-12 * scale.max(1.0), "{q}");
        }
    }

    #[test]
    fn skew_operator_vanishes_at_zero() {
        let s = space(2);
        let zero = FEFunction::zeros(Arc::clone(&s), FieldKind::Velocity);
        let l = skew_linearized_matrix(&zero).unwrap();
        let ones = vec![1.0; s.num_velocity_dofs()];
        assert!(l.matvec(&ones).iter().all(|&v| v.abs() <= 1e-15));
    }

    #[test]
    fn newton_correction_equals_emac_residual() {
        let s = space(3);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let u = random_velocity(&s, &mut rng);
        assert_eq!(
            emac_newton_rhs_correction(&u).unwrap(),
            nl_residual(Formulation::Emac, &u).unwrap()
        );
        let r = emac_newton_rhs_correction(&u).unwrap();
        let e = dot(&r, u.coeffs());
        let scale: f64 = r.iter().zip(u.coeffs()).map(|(a, b)| (a * b).abs()).sum();
        assert!(e.abs() <= 1e-12 * scale.max(1.0));
    }
}

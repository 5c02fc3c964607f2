//! Blocked velocity-pressure systems with strong Dirichlet conditions and a
//! mean-zero pressure constraint, solved by sparse LU.
//!
//! The monolithic unknown ordering is velocity DOFs, then pressure DOFs, then
//! one scalar multiplier enforcing the zero pressure mean:
//!
//! ```text
//! [ A  -B^T  0 ] [u]   [rhs_u]
//! [ B   0    c ] [p] = [rhs_p]
//! [ 0  c^T   0 ] [l]   [0    ]
//! ```
//!
//! Dirichlet rows are replaced by identity rows and their couplings moved to
//! the right-hand side, keeping the eliminated system's pattern fixed so the
//! symbolic factorization can be reused across time steps.

use std::sync::Arc;
use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};

use crate::error::{Error, Result};
use crate::fem::space::TaylorHoodSpace;
use crate::fem::sparse::SparseMatrix;

fn ensure_sequential_solver() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Velocity, pressure, and mean-constraint multiplier of a solved system.
#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
    pub multiplier: f64,
}

/// Value-level saddle system; the contract API used for one-off solves such
/// as the initial-condition projection. Time stepping uses
/// [`CachedSaddleSolver`], which reuses pattern and symbolic factorization.
#[derive(Clone, Debug)]
pub struct SaddleSystem {
    /// Velocity block (n_u x n_u).
    pub a: SparseMatrix,
    /// Divergence coupling (n_p x n_u).
    pub b: SparseMatrix,
    /// Pressure mean-constraint row, entries (psi_i, 1).
    pub c: Vec<f64>,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    /// (velocity DOF, prescribed value) pairs.
    pub dirichlet: Vec<(usize, f64)>,
}

impl SaddleSystem {
    fn check_dims(&self) -> Result<()> {
        let n_u = self.a.nrows();
        let n_p = self.b.nrows();
        if self.a.ncols() != n_u
            || self.b.ncols() != n_u
            || self.c.len() != n_p
            || self.rhs_u.len() != n_u
            || self.rhs_p.len() != n_p
        {
            return Err(Error::invalid("inconsistent saddle system dimensions"));
        }
        Ok(())
    }

    /// Eliminates the Dirichlet constraints: constrained rows become identity
    /// rows with the prescribed value on the right-hand side, and couplings
    /// from unconstrained rows move to their right-hand sides.
    pub fn apply_dirichlet(&self) -> Result<SaddleSystem> {
        self.check_dims()?;
        let n_u = self.a.nrows();
        let mut value_of = vec![None; n_u];
        for &(dof, v) in &self.dirichlet {
            if dof >= n_u {
                return Err(Error::invalid(format!("dirichlet DOF {dof} out of range")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite dirichlet value at {dof}")));
            }
            match value_of[dof] {
                Some(prev) if prev != v => {
                    return Err(Error::invalid(format!(
                        "conflicting dirichlet values at DOF {dof}: {prev} vs {v}"
                    )))
                }
                _ => value_of[dof] = Some(v),
            }
        }

        let mut rhs_u = self.rhs_u.clone();
        let mut rhs_p = self.rhs_p.clone();
        let mut a_triplets = Vec::with_capacity(self.a.nnz());
        for r in 0..n_u {
            if value_of[r].is_some() {
                continue;
            }
            let (cols, vals) = self.a.row(r);
            for (&cidx, &v) in cols.iter().zip(vals) {
                match value_of[cidx] {
                    Some(bc) => rhs_u[r] -= v * bc,
                    None => a_triplets.push((r, cidx, v)),
                }
            }
        }
        for (dof, bc) in value_of.iter().enumerate() {
            if let Some(bc) = bc {
                a_triplets.push((dof, dof, 1.0));
                rhs_u[dof] = *bc;
            }
        }

        let mut b_triplets = Vec::with_capacity(self.b.nnz());
        for r in 0..self.b.nrows() {
            let (cols, vals) = self.b.row(r);
            for (&cidx, &v) in cols.iter().zip(vals) {
                match value_of[cidx] {
                    Some(bc) => rhs_p[r] -= v * bc,
                    None => b_triplets.push((r, cidx, v)),
                }
            }
        }

        Ok(SaddleSystem {
            a: SparseMatrix::from_triplets(n_u, n_u, &a_triplets)?,
            b: SparseMatrix::from_triplets(self.b.nrows(), n_u, &b_triplets)?,
            c: self.c.clone(),
            rhs_u,
            rhs_p,
            dirichlet: Vec::new(),
        })
    }

    /// Solves the system by sparse LU on the monolithic matrix, refining until
    /// the relative algebraic residual is at most 1e-11.
    pub fn solve(&self) -> Result<SaddleSolution> {
        let eliminated;
        let sys = if self.dirichlet.is_empty() {
            self
        } else {
            eliminated = self.apply_dirichlet()?;
            &eliminated
        };
        sys.check_dims()?;
        let n_u = sys.a.nrows();
        let n_p = sys.b.nrows();
        let n = n_u + n_p + 1;

        let mut entries: Vec<(usize, usize, f64)> =
            Vec::with_capacity(sys.a.nnz() + 2 * sys.b.nnz() + 2 * n_p + 1);
        for r in 0..n_u {
            let (cols, vals) = sys.a.row(r);
            for (&cidx, &v) in cols.iter().zip(vals) {
                entries.push((r, cidx, v));
            }
        }
        for r in 0..n_p {
            let (cols, vals) = sys.b.row(r);
            for (&cidx, &v) in cols.iter().zip(vals) {
                entries.push((n_u + r, cidx, v));
                entries.push((cidx, n_u + r, -v));
            }
        }
        for (k, &ck) in sys.c.iter().enumerate() {
            entries.push((n_u + k, n - 1, ck));
            entries.push((n - 1, n_u + k, ck));
        }
        entries.push((n - 1, n - 1, 0.0));

        let csc = MonolithicCsc::from_entries(n, &entries);
        let mut rhs = vec![0.0; n];
        rhs[..n_u].copy_from_slice(&sys.rhs_u);
        rhs[n_u..n_u + n_p].copy_from_slice(&sys.rhs_p);

        let x = csc.lu_solve(&rhs, 1e-11)?;
        Ok(SaddleSolution {
            velocity: x[..n_u].to_vec(),
            pressure: x[n_u..n_u + n_p].to_vec(),
            multiplier: x[n - 1],
        })
    }
}

/// Column-compressed monolithic matrix with its own LU driver.
struct MonolithicCsc {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl MonolithicCsc {
    fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..entries.len()).collect();
        order.sort_by_key(|&i| (entries[i].1, entries[i].0));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        let mut last = None;
        for &i in &order {
            let (r, cidx, v) = entries[i];
            if last == Some((cidx, r)) {
                *vals.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                vals.push(v);
                col_ptr[cidx + 1] += 1;
                last = Some((cidx, r));
            }
        }
        for k in 0..n {
            col_ptr[k + 1] += col_ptr[k];
        }
        MonolithicCsc {
            n,
            col_ptr,
            row_idx,
            vals,
        }
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for c in 0..self.n {
            let xc = x[c];
            for s in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[s]] += self.vals[s] * xc;
            }
        }
    }

    fn lu_solve(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        ensure_sequential_solver();
        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let symbolic = SymbolicLu::<usize>::try_new(sym)
            .map_err(|e| Error::SolverFailure(format!("symbolic factorization: {e:?}")))?;
        let mat = SparseColMatRef::new(sym, &self.vals);
        let lu = Lu::try_new_with_symbolic(symbolic, mat)
            .map_err(|e| Error::SolverFailure(format!("numeric factorization: {e:?}")))?;
        solve_with_refinement(self, &lu, rhs, tol, 2)
    }
}

/// One LU solve plus iterative refinement until the relative residual meets
/// `tol`; errors if refinement cannot reach it.
fn solve_with_refinement(
    csc: &MonolithicCsc,
    lu: &Lu<usize, f64>,
    rhs: &[f64],
    tol: f64,
    max_refine: usize,
) -> Result<Vec<f64>> {
    let n = csc.n;
    let mut x = rhs.to_vec();
    {
        let xm = faer::MatMut::from_column_major_slice_mut(&mut x, n, 1);
        lu.solve_in_place(xm);
    }
    let amax = csc.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut resid = vec![0.0; n];
    for _ in 0..=max_refine {
        csc.matvec(&x, &mut resid);
        for (r, b) in resid.iter_mut().zip(rhs) {
            *r = b - *r;
        }
        let rmax = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = (amax * xmax).max(bmax).max(f64::MIN_POSITIVE);
        if rmax <= tol * scale {
            return Ok(x);
        }
        let mut dx = resid.clone();
        let dm = faer::MatMut::from_column_major_slice_mut(&mut dx, n, 1);
        lu.solve_in_place(dm);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    csc.matvec(&x, &mut resid);
    for (r, b) in resid.iter_mut().zip(rhs) {
        *r = b - *r;
    }
    let rmax = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = (amax * xmax).max(bmax).max(f64::MIN_POSITIVE);
    if rmax <= tol * scale {
        Ok(x)
    } else {
        Err(Error::SolverFailure(format!(
            "relative residual {:.3e} exceeds {:.1e} after refinement",
            rmax / scale,
            tol
        )))
    }
}

/// Adds cell-local 12x12 velocity blocks into the monolithic value array
/// through precomputed slot tables.
pub struct VelocityBlockFill<'a> {
    vals: &'a mut [f64],
    cell_slots: &'a [u32],
}

impl VelocityBlockFill<'_> {
    /// `local[i][j]` is added at (row dofs\[i\], col dofs\[j\]) scaled by `scale`.
    #[inline]
    pub fn add_cell(&mut self, cell: usize, local: &[[f64; 12]; 12], scale: f64) {
        let slots = &self.cell_slots[cell * 144..(cell + 1) * 144];
        for i in 0..12 {
            for j in 0..12 {
                self.vals[slots[i * 12 + j] as usize] += scale * local[i][j];
            }
        }
    }
}

/// Monolithic solver with frozen sparsity pattern, constant-block values,
/// Dirichlet slot tables, and a reusable symbolic LU. One instance serves an
/// entire simulation.
pub struct CachedSaddleSolver {
    n_u: usize,
    n_p: usize,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    const_vals: Vec<f64>,
    vals: Vec<f64>,
    cell_slots: Vec<u32>,
    dirichlet: Vec<usize>,
    /// Slots of row `dirichlet[k]` across all columns, flattened.
    row_slots: Vec<u32>,
    row_slot_offsets: Vec<usize>,
    diag_slots: Vec<u32>,
    symbolic: SymbolicLu<usize>,
    rhs_buf: Vec<f64>,
    resid_buf: Vec<f64>,
}

impl CachedSaddleSolver {
    /// Builds the pattern, constant values (the time-independent part of the
    /// velocity block plus the full coupling blocks), and symbolic LU.
    pub fn new(
        space: &Arc<TaylorHoodSpace>,
        dirichlet_dofs: &[usize],
        const_a: &SparseMatrix,
        b: &SparseMatrix,
        mean: &[f64],
    ) -> Result<Self> {
        ensure_sequential_solver();
        let n_u = space.num_velocity_dofs();
        let n_p = space.num_pressure_dofs();
        let n = n_u + n_p + 1;
        if const_a.nrows() != n_u || b.nrows() != n_p || b.ncols() != n_u || mean.len() != n_p {
            return Err(Error::invalid("inconsistent operator dimensions"));
        }

        // Pattern: encode (col, row) pairs; the velocity block takes the full
        // 2x2 component coupling of every cell so Jacobian fills always land
        // on existing slots.
        let nc = space.mesh().num_cells();
        let mut pairs: Vec<u64> = Vec::with_capacity(nc * 216 + 2 * n_p + n_u + 1);
        let key = |row: usize, col: usize| (col as u64) * n as u64 + row as u64;
        for cell in 0..nc {
            let dofs = space.cell_velocity_dofs(cell);
            let prs = space.cell_pressure_dofs(cell);
            for &di in &dofs {
                for &dj in &dofs {
                    pairs.push(key(di, dj));
                }
                for &pk in &prs {
                    pairs.push(key(n_u + pk, di));
                    pairs.push(key(di, n_u + pk));
                }
            }
        }
        for k in 0..n_p {
            pairs.push(key(n_u + k, n - 1));
            pairs.push(key(n - 1, n_u + k));
        }
        // identity diagonal for constrained rows is already present via the
        // cell blocks; the multiplier needs its structural diagonal.
        pairs.push(key(n - 1, n - 1));
        pairs.sort_unstable();
        pairs.dedup();

        let nnz = pairs.len();
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = vec![0usize; nnz];
        for (s, &k) in pairs.iter().enumerate() {
            let col = (k / n as u64) as usize;
            let row = (k % n as u64) as usize;
            col_ptr[col + 1] += 1;
            row_idx[s] = row;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        drop(pairs);

        let slot_of = |row: usize, col: usize| -> usize {
            let span = col_ptr[col]..col_ptr[col + 1];
            let local = row_idx[span.clone()]
                .binary_search(&row)
                .expect("entry outside frozen pattern");
            span.start + local
        };

        let mut cell_slots = vec![0u32; nc * 144];
        for cell in 0..nc {
            let dofs = space.cell_velocity_dofs(cell);
            for i in 0..12 {
                for j in 0..12 {
                    cell_slots[cell * 144 + i * 12 + j] = slot_of(dofs[i], dofs[j]) as u32;
                }
            }
        }

        let mut const_vals = vec![0.0; nnz];
        for r in 0..n_u {
            let (cols, vals) = const_a.row(r);
            for (&cidx, &v) in cols.iter().zip(vals) {
                const_vals[slot_of(r, cidx)] = v;
            }
        }
        for r in 0..n_p {
            let (cols, vals) = b.row(r);
            for (&cidx, &v) in cols.iter().zip(vals) {
                const_vals[slot_of(n_u + r, cidx)] = v;
                const_vals[slot_of(cidx, n_u + r)] = -v;
            }
        }
        for (k, &ck) in mean.iter().enumerate() {
            const_vals[slot_of(n_u + k, n - 1)] = ck;
            const_vals[slot_of(n - 1, n_u + k)] = ck;
        }

        let mut dirichlet = dirichlet_dofs.to_vec();
        dirichlet.sort_unstable();
        dirichlet.dedup();
        if dirichlet.iter().any(|&d| d >= n_u) {
            return Err(Error::invalid("dirichlet DOF outside velocity space"));
        }
        let mut constrained = vec![false; n];
        for &d in &dirichlet {
            constrained[d] = true;
        }
        let mut per_row: Vec<Vec<u32>> = vec![Vec::new(); dirichlet.len()];
        let rank_of = |dof: usize| dirichlet.binary_search(&dof).unwrap();
        for c in 0..n {
            for s in col_ptr[c]..col_ptr[c + 1] {
                let r = row_idx[s];
                if constrained[r] {
                    per_row[rank_of(r)].push(s as u32);
                }
            }
        }
        let mut row_slots = Vec::new();
        let mut row_slot_offsets = vec![0usize];
        for list in &per_row {
            row_slots.extend_from_slice(list);
            row_slot_offsets.push(row_slots.len());
        }
        let diag_slots: Vec<u32> = dirichlet.iter().map(|&d| slot_of(d, d) as u32).collect();

        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLu::<usize>::try_new(sym)
            .map_err(|e| Error::SolverFailure(format!("symbolic factorization: {e:?}")))?;

        Ok(CachedSaddleSolver {
            n_u,
            n_p,
            n,
            col_ptr,
            row_idx,
            const_vals,
            vals: vec![0.0; nnz],
            cell_slots,
            dirichlet,
            row_slots,
            row_slot_offsets,
            diag_slots,
            symbolic,
            rhs_buf: vec![0.0; n],
            resid_buf: vec![0.0; n],
        })
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    /// Fills the varying part of the velocity block through `fill`, applies
    /// the Dirichlet elimination with `bc_values` (parallel to
    /// `dirichlet_dofs`), factorizes, and solves. Returns velocity, pressure,
    /// and the mean multiplier.
    pub fn solve(
        &mut self,
        fill: impl FnOnce(&mut VelocityBlockFill),
        rhs_u: &[f64],
        rhs_p: &[f64],
        bc_values: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        assert_eq!(rhs_u.len(), self.n_u);
        assert_eq!(rhs_p.len(), self.n_p);
        assert_eq!(bc_values.len(), self.dirichlet.len());

        self.vals.copy_from_slice(&self.const_vals);
        fill(&mut VelocityBlockFill {
            vals: &mut self.vals,
            cell_slots: &self.cell_slots,
        });

        let rhs = &mut self.rhs_buf;
        rhs[..self.n_u].copy_from_slice(rhs_u);
        rhs[self.n_u..self.n_u + self.n_p].copy_from_slice(rhs_p);
        rhs[self.n - 1] = 0.0;

        // move couplings of constrained columns to the right-hand side
        for (k, &dof) in self.dirichlet.iter().enumerate() {
            let bc = bc_values[k];
            for s in self.col_ptr[dof]..self.col_ptr[dof + 1] {
                let r = self.row_idx[s];
                if r != dof {
                    rhs[r] -= self.vals[s] * bc;
                }
                self.vals[s] = 0.0;
            }
        }
        // replace constrained rows by identity rows
        for (k, &dof) in self.dirichlet.iter().enumerate() {
            for &s in &self.row_slots[self.row_slot_offsets[k]..self.row_slot_offsets[k + 1]] {
                self.vals[s as usize] = 0.0;
            }
            self.vals[self.diag_slots[k] as usize] = 1.0;
            rhs[dof] = bc_values[k];
        }

        let sym = SymbolicSparseColMatRef::new_checked(
            self.n,
            self.n,
            &self.col_ptr,
            None,
            &self.row_idx,
        );
        let mat = SparseColMatRef::new(sym, &self.vals);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| Error::SolverFailure(format!("numeric factorization: {e:?}")))?;

        let n = self.n;
        let mut x = rhs.clone();
        {
            let xm = faer::MatMut::from_column_major_slice_mut(&mut x, n, 1);
            lu.solve_in_place(xm);
        }
        // one cheap residual check with refinement; protects long runs from a
        // rare bad pivot without changing results when LU is already accurate
        let amax = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bmax = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for attempt in 0..3 {
            self.matvec_into(&x, attempt);
            let resid = &mut self.resid_buf;
            for (r, b) in resid.iter_mut().zip(rhs.iter()) {
                *r = b - *r;
            }
            let rmax = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let xmax = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = (amax * xmax).max(bmax).max(f64::MIN_POSITIVE);
            if rmax <= 1e-12 * scale {
                break;
            }
            if attempt == 2 {
                if rmax > 1e-9 * scale {
                    return Err(Error::SolverFailure(format!(
                        "relative residual {:.3e} after refinement",
                        rmax / scale
                    )));
                }
                break;
            }
            let mut dx = resid.clone();
            let dm = faer::MatMut::from_column_major_slice_mut(&mut dx, n, 1);
            lu.solve_in_place(dm);
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        }

        let velocity = x[..self.n_u].to_vec();
        let pressure = x[self.n_u..self.n_u + self.n_p].to_vec();
        let multiplier = x[n - 1];
        Ok((velocity, pressure, multiplier))
    }

    fn matvec_into(&mut self, x: &[f64], _tag: usize) {
        self.resid_buf.fill(0.0);
        for c in 0..self.n {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for s in self.col_ptr[c]..self.col_ptr[c + 1] {
                self.resid_buf[self.row_idx[s]] += self.vals[s] * xc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble::{
        assemble_div, assemble_mass, assemble_stiffness, load_vector, pressure_mean_vector,
    };
    use crate::fem::space::{interpolate_pressure, interpolate_velocity, TaylorHoodSpace};
    use crate::mesh::{boundary_dofs, build_uniform_tri_mesh, Rect};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn space(nx: usize) -> Arc<TaylorHoodSpace> {
        let mesh = Arc::new(build_uniform_tri_mesh(nx, nx, Rect::unit()).unwrap());
        Arc::new(TaylorHoodSpace::new(mesh))
    }

    #[test]
    fn identity_system_returns_rhs() {
        let a = SparseMatrix::from_triplets(
            4,
            4,
            &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0)],
        )
        .unwrap();
        let b = SparseMatrix::from_triplets(1, 4, &[]).unwrap();
        let sys = SaddleSystem {
            a,
            b,
            c: vec![2.0],
            rhs_u: vec![1.0, -2.0, 3.0, 0.5],
            rhs_p: vec![0.0],
            dirichlet: vec![],
        };
        let sol = sys.solve().unwrap();
        for (got, want) in sol.velocity.iter().zip(&sys.rhs_u) {
            assert!((got - want).abs() <= 1e-13);
        }
        assert!(sol.pressure[0].abs() <= 1e-13);
    }

    #[test]
    fn empty_dirichlet_is_identity_transform() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]).unwrap();
        let b = SparseMatrix::from_triplets(1, 2, &[(0, 0, 1.0)]).unwrap();
        let sys = SaddleSystem {
            a: a.clone(),
            b: b.clone(),
            c: vec![1.0],
            rhs_u: vec![1.0, 2.0],
            rhs_p: vec![0.0],
            dirichlet: vec![],
        };
        let out = sys.apply_dirichlet().unwrap();
        assert_eq!(out.a, a);
        assert_eq!(out.b, b);
        assert_eq!(out.rhs_u, sys.rhs_u);
    }

    #[test]
    fn conflicting_dirichlet_rejected() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let b = SparseMatrix::from_triplets(1, 2, &[]).unwrap();
        let sys = SaddleSystem {
            a,
            b,
            c: vec![1.0],
            rhs_u: vec![0.0, 0.0],
            rhs_p: vec![0.0],
            dirichlet: vec![(0, 1.0), (0, 2.0)],
        };
        assert!(sys.apply_dirichlet().is_err());
    }

    #[test]
    fn random_system_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..5 {
            let n_u = 16;
            let n_p = 3;
            // diagonally dominant A keeps the system comfortably nonsingular
            let mut at = Vec::new();
            for i in 0..n_u {
                at.push((i, i, 8.0 + rng.random_range(0.0..2.0)));
                for _ in 0..3 {
                    let j = rng.random_range(0..n_u);
                    at.push((i, j, rng.random_range(-1.0..1.0)));
                }
            }
            let mut bt = Vec::new();
            for k in 0..n_p {
                for _ in 0..4 {
                    let j = rng.random_range(0..n_u);
                    bt.push((k, j, rng.random_range(-1.0..1.0)));
                }
            }
            let sys = SaddleSystem {
                a: SparseMatrix::from_triplets(n_u, n_u, &at).unwrap(),
                b: SparseMatrix::from_triplets(n_p, n_u, &bt).unwrap(),
                c: (0..n_p).map(|_| rng.random_range(0.5..1.5)).collect(),
                rhs_u: (0..n_u).map(|_| rng.random_range(-1.0..1.0)).collect(),
                rhs_p: (0..n_p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                dirichlet: vec![],
            };
            let sol = sys.solve().unwrap();

            // dense Gaussian elimination oracle on the monolithic system
            let n = n_u + n_p + 1;
            let mut m = vec![vec![0.0f64; n]; n];
            let mut rhs = vec![0.0f64; n];
            for r in 0..n_u {
                let (cols, vals) = sys.a.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    m[r][c] += v;
                }
                rhs[r] = sys.rhs_u[r];
            }
            for r in 0..n_p {
                let (cols, vals) = sys.b.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    m[n_u + r][c] += v;
                    m[c][n_u + r] -= v;
                }
                rhs[n_u + r] = sys.rhs_p[r];
            }
            for k in 0..n_p {
                m[n_u + k][n - 1] += sys.c[k];
                m[n - 1][n_u + k] += sys.c[k];
            }
            let x = dense_solve(m, rhs);
            for (i, xi) in x.iter().enumerate().take(n_u) {
                assert!(
                    (sol.velocity[i] - xi).abs() <= 1e-10 * xi.abs().max(1.0),
                    "u[{i}]: {} vs {xi}",
                    sol.velocity[i]
                );
            }
            for k in 0..n_p {
                assert!((sol.pressure[k] - x[n_u + k]).abs() <= 1e-10 * x[n_u + k].abs().max(1.0));
            }
        }
    }

    fn dense_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            let d = m[col][col];
            assert!(d.abs() > 1e-14, "oracle hit a zero pivot");
            for r in 0..n {
                if r != col && m[r][col] != 0.0 {
                    let f = m[r][col] / d;
                    for k in col..n {
                        m[r][k] -= f * m[col][k];
                    }
                    rhs[r] -= f * rhs[col];
                }
            }
        }
        (0..n).map(|i| rhs[i] / m[i][i]).collect()
    }

    #[test]
    fn stokes_manufactured_polynomial_solution() {
        // u = (y^2, x^2) is divergence free and quadratic; p = x + y - 1 has
        // zero mean on the unit square. With nu = 1 the forcing is
        // f = -lap(u) + grad p = (-2 + 1, -2 + 1).
        let s = space(4);
        let k = assemble_stiffness(&s);
        let b = assemble_div(&s);
        let c = pressure_mean_vector(&s);
        let exact_u = |x: f64, y: f64| [y * y, x * x];
        let rhs_u = load_vector(&s, 5, |_, _| [-1.0, -1.0]).unwrap();
        let bd = boundary_dofs(s.mesh(), &s).unwrap();
        let nsc = s.num_scalar_nodes();
        let dirichlet: Vec<(usize, f64)> = bd
            .iter()
            .map(|&d| {
                let node = d % nsc;
                let comp = d / nsc;
                let [x, y] = s.node_position(node);
                (d, exact_u(x, y)[comp])
            })
            .collect();
        let sys = SaddleSystem {
            a: k,
            b,
            c,
            rhs_u,
            rhs_p: vec![0.0; s.num_pressure_dofs()],
            dirichlet,
        };
        let sol = sys.solve().unwrap();
        let uh = interpolate_velocity(&s, exact_u);
        for (got, want) in sol.velocity.iter().zip(uh.coeffs()) {
            assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
        }
        let ph = interpolate_pressure(&s, |x, y| x + y - 1.0);
        for (got, want) in sol.pressure.iter().zip(ph.coeffs()) {
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
        assert!(sol.multiplier.abs() <= 1e-10);
    }

    #[test]
    fn homogeneous_dirichlet_gives_exact_zeros() {
        let s = space(3);
        let m = assemble_mass(&s);
        let b = assemble_div(&s);
        let c = pressure_mean_vector(&s);
        let rhs_u = load_vector(&s, 5, |x, y| [x + y, x - y]).unwrap();
        let bd = boundary_dofs(s.mesh(), &s).unwrap();
        let sys = SaddleSystem {
            a: m,
            b,
            c,
            rhs_u,
            rhs_p: vec![0.0; s.num_pressure_dofs()],
            dirichlet: bd.iter().map(|&d| (d, 0.0)).collect(),
        };
        let sol = sys.solve().unwrap();
        for &d in &bd {
            assert_eq!(sol.velocity[d], 0.0);
        }
    }

    #[test]
    fn solving_twice_is_bitwise_identical() {
        let s = space(3);
        let sysf = || {
            let k = assemble_stiffness(&s);
            let b = assemble_div(&s);
            let c = pressure_mean_vector(&s);
            let rhs_u = load_vector(&s, 5, |x, y| [y, -x]).unwrap();
            let bd = boundary_dofs(s.mesh(), &s).unwrap();
            SaddleSystem {
                a: k,
                b,
                c,
                rhs_u,
                rhs_p: vec![0.0; s.num_pressure_dofs()],
                dirichlet: bd.iter().map(|&d| (d, 0.0)).collect(),
            }
        };
        let s1 = sysf().solve().unwrap();
        let s2 = sysf().solve().unwrap();
        assert_eq!(s1.velocity, s2.velocity);
        assert_eq!(s1.pressure, s2.pressure);
    }

    #[test]
    fn cached_solver_matches_value_api() {
        let s = space(4);
        let mass = assemble_mass(&s);
        let b = assemble_div(&s);
        let c = pressure_mean_vector(&s);
        let rhs_u = load_vector(&s, 5, |x, y| [x * y, y - 0.3]).unwrap();
        let bd = boundary_dofs(s.mesh(), &s).unwrap();

        let sys = SaddleSystem {
            a: mass.clone(),
            b: b.clone(),
            c: c.clone(),
            rhs_u: rhs_u.clone(),
            rhs_p: vec![0.0; s.num_pressure_dofs()],
            dirichlet: bd.iter().map(|&d| (d, 0.0)).collect(),
        };
        let sol = sys.solve().unwrap();

        let mut cached = CachedSaddleSolver::new(&s, &bd, &mass, &b, &c).unwrap();
        let zeros = vec![0.0; bd.len()];
        let (vel, pr, _) = cached
            .solve(|_| {}, &rhs_u, &vec![0.0; s.num_pressure_dofs()], &zeros)
            .unwrap();
        for (a, b) in vel.iter().zip(&sol.velocity) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in pr.iter().zip(&sol.pressure) {
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1.0));
        }

        // pressure mean is enforced
        let mean: f64 = c.iter().zip(&pr).map(|(a, b)| a * b).sum();
        assert!(mean.abs() <= 1e-11);
        // discrete divergence of the velocity vanishes
        let bu = b.matvec(&vel);
        let bu_max = bu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(bu_max <= 1e-10, "{bu_max}");
    }
}

//! Crank-Nicolson time stepping with three ways of resolving the
//! nonlinearity: a full Newton iteration, a fixed number of Newton steps
//! linearized about an extrapolated state, and the skew-symmetrized
//! linearization.
//!
//! Every linear solve has the same shape. With `u_old` the accepted velocity,
//! `x` the end-of-step unknown, midpoint `m = (x + u_old) / 2`, and a
//! linearization state `u*`, the velocity operator is
//!
//! ```text
//! M/dt + (nu/2) K + (gamma/2) G + (1/2) W(u*)
//! ```
//!
//! where `W` is the nonlinearity Jacobian at `u*` (Newton modes) or the
//! antisymmetric operator of the skew linearization. The Newton right-hand
//! side carries the quadratic correction `+NL(u*)`, which is exactly the
//! first-order expansion of `NL(m)` about `u*`. The divergence constraint is
//! imposed on `x`, so an initially divergence-free state keeps every midpoint
//! divergence-free as well.

use std::sync::Arc;

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::fem::assemble::{
    assemble_div, assemble_graddiv, assemble_mass, assemble_stiffness, load_vector,
    pressure_mean_vector, ASSEMBLY_DEGREE, ERROR_DEGREE,
};
use crate::fem::space::{FEFunction, FieldKind, TaylorHoodSpace};
use crate::fem::sparse::SparseMatrix;
use crate::forms::{self, Formulation};
use crate::mesh::boundary_dofs;
use crate::saddle::{CachedSaddleSolver, SaddleSystem};

/// Kinetic energy above `1e16` times the initial one stops a run.
pub const DIVERGENCE_GUARD: f64 = 1e16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonlinearMode {
    FullNewton { tol: f64, max_iter: usize },
    NewtonK { k: usize },
    SkewLinearized,
}

#[derive(Clone, Copy, Debug)]
pub struct SchemeConfig {
    pub form: Formulation,
    pub mode: NonlinearMode,
    pub dt: f64,
    pub t_end: f64,
    pub nu: f64,
    pub gamma: f64,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.t_end < self.dt {
            return Err(Error::invalid("t_end must be at least one step"));
        }
        if self.nu < 0.0 || self.gamma < 0.0 {
            return Err(Error::invalid("nu and gamma must be nonnegative"));
        }
        match self.mode {
            NonlinearMode::FullNewton { tol, max_iter } => {
                if !(tol > 0.0) || max_iter == 0 {
                    return Err(Error::invalid("newton tolerance and budget must be positive"));
                }
            }
            NonlinearMode::NewtonK { k } => {
                if k == 0 {
                    return Err(Error::invalid("newton step count must be positive"));
                }
                if self.form != Formulation::Emac {
                    return Err(Error::invalid(
                        "the fixed-step newton linearization is defined for the emac form only",
                    ));
                }
            }
            NonlinearMode::SkewLinearized => {
                if self.form != Formulation::Emac {
                    return Err(Error::invalid(
                        "the skew linearization is defined for the emac form only",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of steps; `t_end` must be an integer multiple of `dt` to 1e-9.
    pub fn num_steps(&self) -> Result<usize> {
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "t_end {} is not an integer number of steps of dt {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

/// How the initial velocity enters the discrete space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialCondition {
    /// Divergence-constrained L2 projection (the default).
    Project,
    /// Plain nodal interpolation; kept as an escape hatch for comparison.
    Interpolate,
}

/// Benchmark problem data consumed by the time loop.
pub trait FlowProblem {
    fn initial_velocity(&self, x: f64, y: f64) -> [f64; 2];
    fn boundary_velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    fn has_exact_solution(&self) -> bool {
        false
    }
    /// Only meaningful when `has_exact_solution` returns true.
    fn exact_velocity(&self, _x: f64, _y: f64, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
    fn has_forcing(&self) -> bool {
        false
    }
    fn forcing(&self, _x: f64, _y: f64, _t: f64) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Discrete trajectory point: the two most recent velocities and the latest
/// pressure (the modified-pressure multiplier under the emac form).
#[derive(Clone, Debug)]
pub struct TimeState {
    pub t: f64,
    pub step: usize,
    pub u_curr: FEFunction,
    pub u_prev: Option<FEFunction>,
    pub p_curr: FEFunction,
}

/// Per-step solver statistics and energy-balance ingredients.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub newton_iters: usize,
    /// H1 norm (through M + K) of the last update.
    pub step_norm: f64,
    /// Infinity norm of the discrete divergence of the accepted velocity.
    pub bu_inf: f64,
    /// L2 norm of the accepted velocity.
    pub u_l2: f64,
    /// (grad m, grad m) at the midpoint m.
    pub midpoint_grad_sq: f64,
    /// (div m, div m) at the midpoint m.
    pub midpoint_div_sq: f64,
    /// (f, m) at the midpoint.
    pub forcing_power: f64,
}

enum LinKind {
    Newton(Formulation),
    Skew,
}

/// Constrained L2 projection of a velocity field: minimizes the L2 distance
/// subject to a discretely divergence-free result and strong boundary values.
/// Returns the projected field and the multiplier pressure.
pub fn project_initial_condition(
    space: &Arc<TaylorHoodSpace>,
    field: impl Fn(f64, f64) -> [f64; 2],
    boundary: impl Fn(f64, f64) -> [f64; 2],
) -> Result<(FEFunction, FEFunction)> {
    let mass = assemble_mass(space);
    let div = assemble_div(space);
    let mean = pressure_mean_vector(space);
    project_with(space, &mass, &div, &mean, field, boundary)
}

fn project_with(
    space: &Arc<TaylorHoodSpace>,
    mass: &SparseMatrix,
    div: &SparseMatrix,
    mean: &[f64],
    field: impl Fn(f64, f64) -> [f64; 2],
    boundary: impl Fn(f64, f64) -> [f64; 2],
) -> Result<(FEFunction, FEFunction)> {
    let rhs_u = load_vector(space, ERROR_DEGREE, &field)?;
    let bd = boundary_dofs(space.mesh(), space)?;
    let nsc = space.num_scalar_nodes();
    let dirichlet: Vec<(usize, f64)> = bd
        .iter()
        .map(|&d| {
            let [x, y] = space.node_position(d % nsc);
            (d, boundary(x, y)[d / nsc])
        })
        .collect();
    let sys = SaddleSystem {
        a: mass.clone(),
        b: div.clone(),
        c: mean.to_vec(),
        rhs_u,
        rhs_p: vec![0.0; space.num_pressure_dofs()],
        dirichlet,
    };
    let sol = sys.solve()?;
    let u = FEFunction::new(Arc::clone(space), FieldKind::Velocity, sol.velocity)?;
    // the projection was posed with +(lambda, div v); the solver's pressure
    // column carries the opposite sign
    let lambda = FEFunction::new(
        Arc::clone(space),
        FieldKind::Pressure,
        sol.pressure.iter().map(|p| -p).collect(),
    )?;
    Ok((u, lambda))
}

/// A configured simulation with assembled operators and a reusable solver.
pub struct Simulation<'p, P: FlowProblem + ?Sized> {
    space: Arc<TaylorHoodSpace>,
    config: SchemeConfig,
    problem: &'p P,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    graddiv: SparseMatrix,
    div: SparseMatrix,
    solver: CachedSaddleSolver,
    /// (node, component) per constrained DOF, for boundary evaluation.
    bc_nodes: Vec<(usize, usize)>,
    rhs_p_zero: Vec<f64>,
    block_buf: Vec<[[f64; 12]; 12]>,
    state: TimeState,
    initial_energy: f64,
}

impl<'p, P: FlowProblem + ?Sized> Simulation<'p, P> {
    pub fn new(
        space: Arc<TaylorHoodSpace>,
        config: SchemeConfig,
        problem: &'p P,
        ic: InitialCondition,
    ) -> Result<Self> {
        config.validate()?;
        config.num_steps()?;

        let mass = assemble_mass(&space);
        let stiffness = assemble_stiffness(&space);
        let graddiv = assemble_graddiv(&space);
        let div = assemble_div(&space);
        let mean = pressure_mean_vector(&space);

        let u0 = match ic {
            InitialCondition::Project => project_with(
                &space,
                &mass,
                &div,
                &mean,
                |x, y| problem.initial_velocity(x, y),
                |x, y| problem.boundary_velocity(x, y, 0.0),
            )?
            .0,
            InitialCondition::Interpolate => {
                crate::fem::space::interpolate_velocity(&space, |x, y| {
                    problem.initial_velocity(x, y)
                })
            }
        };

        // time-independent part of the velocity operator
        let mut const_triplets: Vec<(usize, usize, f64)> = Vec::new();
        let n_u = space.num_velocity_dofs();
        for r in 0..n_u {
            let (cols, vals) = mass.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                const_triplets.push((r, c, v / config.dt));
            }
            let (cols, vals) = stiffness.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                const_triplets.push((r, c, 0.5 * config.nu * v));
            }
            if config.gamma > 0.0 {
                let (cols, vals) = graddiv.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    const_triplets.push((r, c, 0.5 * config.gamma * v));
                }
            }
        }
        let const_a = SparseMatrix::from_triplets(n_u, n_u, &const_triplets)?;
        drop(const_triplets);

        let bd = boundary_dofs(space.mesh(), &space)?;
        let solver = CachedSaddleSolver::new(&space, &bd, &const_a, &div, &mean)?;
        let nsc = space.num_scalar_nodes();
        let bc_nodes: Vec<(usize, usize)> =
            solver.dirichlet_dofs().iter().map(|&d| (d % nsc, d / nsc)).collect();

        let p0 = FEFunction::zeros(Arc::clone(&space), FieldKind::Pressure);
        let initial_energy = diagnostics::kinetic_energy(&u0);
        let nc = space.mesh().num_cells();
        Ok(Simulation {
            rhs_p_zero: vec![0.0; space.num_pressure_dofs()],
            block_buf: vec![[[0.0; 12]; 12]; nc],
            state: TimeState {
                t: 0.0,
                step: 0,
                u_curr: u0,
                u_prev: None,
                p_curr: p0,
            },
            space,
            config,
            problem,
            mass,
            stiffness,
            graddiv,
            div,
            solver,
            bc_nodes,
            initial_energy,
        })
    }

    pub fn state(&self) -> &TimeState {
        &self.state
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn initial_energy(&self) -> f64 {
        self.initial_energy
    }

    pub fn space(&self) -> &Arc<TaylorHoodSpace> {
        &self.space
    }

    fn h1_norm(&self, v: &[f64]) -> f64 {
        (self.mass.bilinear(v, v) + self.stiffness.bilinear(v, v)).max(0.0).sqrt()
    }

    /// Base right-hand side for the current step: inertia and implicit halves
    /// of the viscous and grad-div terms applied to the accepted state, plus
    /// the midpoint forcing. Returns (rhs, forcing load vector if any).
    fn base_rhs(&self, t_new: f64) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let u_old = self.state.u_curr.coeffs();
        let mut rhs = vec![0.0; self.space.num_velocity_dofs()];
        self.mass.matvec_add_scaled(u_old, 1.0 / self.config.dt, &mut rhs);
        if self.config.nu > 0.0 {
            self.stiffness
                .matvec_add_scaled(u_old, -0.5 * self.config.nu, &mut rhs);
        }
        if self.config.gamma > 0.0 {
            self.graddiv
                .matvec_add_scaled(u_old, -0.5 * self.config.gamma, &mut rhs);
        }
        let forcing = if self.problem.has_forcing() {
            let t_mid = 0.5 * (self.state.t + t_new);
            let f = load_vector(&self.space, ASSEMBLY_DEGREE, |x, y| {
                self.problem.forcing(x, y, t_mid)
            })?;
            for (r, fi) in rhs.iter_mut().zip(&f) {
                *r += fi;
            }
            Some(f)
        } else {
            None
        };
        Ok((rhs, forcing))
    }

    fn boundary_values(&self, t: f64) -> Vec<f64> {
        self.bc_nodes
            .iter()
            .map(|&(node, comp)| {
                let [x, y] = self.space.node_position(node);
                self.problem.boundary_velocity(x, y, t)[comp]
            })
            .collect()
    }

    /// One linearized solve about `u_star`; returns the new iterate.
    fn linear_solve(
        &mut self,
        kind: &LinKind,
        u_star: &FEFunction,
        base_rhs: &[f64],
        bc: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n_u = self.space.num_velocity_dofs();
        let mut rhs = base_rhs.to_vec();
        {
            let space = &self.space;
            let u_old = self.state.u_curr.coeffs();
            let blocks = &mut self.block_buf;
            match kind {
                LinKind::Newton(form) => {
                    forms::for_each_newton_cell(*form, u_star, |cell, w, nl| {
                        blocks[cell] = *w;
                        let dofs = space.cell_velocity_dofs(cell);
                        for i in 0..12 {
                            let mut acc = nl[i];
                            for j in 0..12 {
                                acc -= 0.5 * w[i][j] * u_old[dofs[j]];
                            }
                            rhs[dofs[i]] += acc;
                        }
                    });
                }
                LinKind::Skew => {
                    forms::for_each_skew_cell(u_star, |cell, w| {
                        blocks[cell] = *w;
                        let dofs = space.cell_velocity_dofs(cell);
                        for i in 0..12 {
                            let mut acc = 0.0;
                            for j in 0..12 {
                                acc -= 0.5 * w[i][j] * u_old[dofs[j]];
                            }
                            rhs[dofs[i]] += acc;
                        }
                    });
                }
            }
        }
        debug_assert_eq!(rhs.len(), n_u);
        let blocks = &self.block_buf;
        let nc = self.space.mesh().num_cells();
        let (vel, pr, _mult) = self.solver.solve(
            |fill| {
                for cell in 0..nc {
                    fill.add_cell(cell, &blocks[cell], 0.5);
                }
            },
            &rhs,
            &self.rhs_p_zero,
            bc,
        )?;
        Ok((vel, pr))
    }

    fn predictor(&self) -> Vec<f64> {
        match &self.state.u_prev {
            Some(prev) => self
                .state
                .u_curr
                .coeffs()
                .iter()
                .zip(prev.coeffs())
                .map(|(c, p)| 2.0 * c - p)
                .collect(),
            None => self.state.u_curr.coeffs().to_vec(),
        }
    }

    fn midpoint_fn(&self, x: &[f64]) -> FEFunction {
        let m: Vec<f64> = x
            .iter()
            .zip(self.state.u_curr.coeffs())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        FEFunction::new(Arc::clone(&self.space), FieldKind::Velocity, m).unwrap()
    }

    /// Full Newton resolution of the implicit step. Stops when the H1 norm
    /// of the update drops below `tol`, or below the roundoff floor of the
    /// iterate scale, whichever is larger; this keeps the absolute tolerance
    /// meaningful for O(1) states while letting runs on a blow-up trajectory
    /// proceed to the divergence guard.
    pub fn step_full_newton(&mut self, tol: f64, max_iter: usize) -> Result<StepReport> {
        let t_new = (self.state.step + 1) as f64 * self.config.dt;
        let bc = self.boundary_values(t_new);
        let (base_rhs, forcing) = self.base_rhs(t_new)?;
        let form = self.config.form;

        let mut x = self.predictor();
        let mut p = Vec::new();
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..max_iter {
            let u_star = self.midpoint_fn(&x);
            let (x_new, p_new) = self.linear_solve(&LinKind::Newton(form), &u_star, &base_rhs, &bc)?;
            let delta: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let step_norm = self.h1_norm(&delta);
            history.push(step_norm);
            x = x_new;
            p = p_new;
            let floor = 1e-13 * self.h1_norm(&x);
            if step_norm < tol || step_norm < floor {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                step_norms: history,
                last_iterate: x,
            });
        }
        Ok(self.accept(x, p, history.len(), *history.last().unwrap(), forcing.as_deref(), t_new))
    }

    /// Exactly `k` linearized solves. The first linearizes about the
    /// second-order extrapolation `(3/2) u_curr - (1/2) u_prev`; later solves
    /// linearize about the midpoint of the latest iterate, so large `k`
    /// recovers the full Newton fixed point.
    pub fn step_newton_k(&mut self, k: usize) -> Result<StepReport> {
        let t_new = (self.state.step + 1) as f64 * self.config.dt;
        let bc = self.boundary_values(t_new);
        let (base_rhs, forcing) = self.base_rhs(t_new)?;
        let form = self.config.form;

        let mut x = self.predictor();
        let mut p = Vec::new();
        let mut step_norm = f64::NAN;
        for _ in 0..k {
            let u_star = self.midpoint_fn(&x);
            let (x_new, p_new) = self.linear_solve(&LinKind::Newton(form), &u_star, &base_rhs, &bc)?;
            let delta: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            step_norm = self.h1_norm(&delta);
            x = x_new;
            p = p_new;
        }
        Ok(self.accept(x, p, k, step_norm, forcing.as_deref(), t_new))
    }

    /// Single solve with the antisymmetric linearization about the
    /// extrapolated state; conserves the discrete energy balance exactly.
    pub fn step_skew_linearized(&mut self) -> Result<StepReport> {
        let t_new = (self.state.step + 1) as f64 * self.config.dt;
        let bc = self.boundary_values(t_new);
        let (base_rhs, forcing) = self.base_rhs(t_new)?;

        let x0 = self.predictor();
        let u_star = self.midpoint_fn(&x0);
        let (x, p) = self.linear_solve(&LinKind::Skew, &u_star, &base_rhs, &bc)?;
        let delta: Vec<f64> = x.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let step_norm = self.h1_norm(&delta);
        Ok(self.accept(x, p, 1, step_norm, forcing.as_deref(), t_new))
    }

    /// Advances one step under the configured mode. The first step is always
    /// taken with full Newton because the extrapolated modes need two
    /// previous states.
    pub fn step(&mut self) -> Result<StepReport> {
        let startup = self.state.u_prev.is_none();
        match self.config.mode {
            NonlinearMode::FullNewton { tol, max_iter } => self.step_full_newton(tol, max_iter),
            NonlinearMode::NewtonK { k } => {
                if startup {
                    self.step_full_newton(1e-8, 25)
                } else {
                    self.step_newton_k(k)
                }
            }
            NonlinearMode::SkewLinearized => {
                if startup {
                    self.step_full_newton(1e-8, 25)
                } else {
                    self.step_skew_linearized()
                }
            }
        }
    }

    fn accept(
        &mut self,
        x: Vec<f64>,
        p: Vec<f64>,
        iters: usize,
        step_norm: f64,
        forcing: Option<&[f64]>,
        t_new: f64,
    ) -> StepReport {
        let m = self.midpoint_fn(&x);
        let mc = m.coeffs();
        let midpoint_grad_sq = self.stiffness.bilinear(mc, mc);
        let midpoint_div_sq = self.graddiv.bilinear(mc, mc);
        let forcing_power = forcing
            .map(|f| f.iter().zip(mc).map(|(a, b)| a * b).sum())
            .unwrap_or(0.0);
        let bu = self.div.matvec(&x);
        let bu_inf = bu.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        let u_new = FEFunction::new(Arc::clone(&self.space), FieldKind::Velocity, x).unwrap();
        let p_new = FEFunction::new(Arc::clone(&self.space), FieldKind::Pressure, p).unwrap();
        let u_l2 = (2.0 * diagnostics::kinetic_energy(&u_new)).max(0.0).sqrt();

        let old = std::mem::replace(&mut self.state.u_curr, u_new);
        self.state.u_prev = Some(old);
        self.state.p_curr = p_new;
        self.state.step += 1;
        self.state.t = t_new;

        StepReport {
            newton_iters: iters,
            step_norm,
            bu_inf,
            u_l2,
            midpoint_grad_sq,
            midpoint_div_sq,
            forcing_power,
        }
    }

    /// Diagnostics row for the current state.
    pub fn record(&self, report: Option<&StepReport>) -> DiagnosticsRecord {
        let u = &self.state.u_curr;
        let (mx, my) = diagnostics::linear_momentum(u);
        let t = self.state.t;
        let l2 = if self.problem.has_exact_solution() {
            Some(diagnostics::l2_error(u, |x, y| {
                self.problem.exact_velocity(x, y, t)
            }))
        } else {
            None
        };
        DiagnosticsRecord {
            step: self.state.step,
            t,
            energy: diagnostics::kinetic_energy(u),
            momentum_x: mx,
            momentum_y: my,
            ang_momentum: diagnostics::angular_momentum(u),
            div_norm: diagnostics::div_l2_norm(u),
            l2_error: l2,
            newton_iters: report.map_or(0, |r| r.newton_iters),
            nonlinear_residual: report.map_or(0.0, |r| r.step_norm),
            diverged: false,
        }
    }
}

/// Streaming consumer of the per-step series.
pub trait RunSink {
    fn on_record(
        &mut self,
        record: &DiagnosticsRecord,
        state: &TimeState,
        report: Option<&StepReport>,
    ) -> Result<()>;
}

/// Sink that only collects nothing; useful when the outcome records suffice.
pub struct NullSink;

impl RunSink for NullSink {
    fn on_record(&mut self, _: &DiagnosticsRecord, _: &TimeState, _: Option<&StepReport>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub diverged: bool,
    pub final_velocity: FEFunction,
    pub final_pressure: FEFunction,
}

/// Runs a full simulation: projects (or interpolates) the initial state,
/// advances to `t_end`, emits one record per step (plus the initial record),
/// and stops early when the divergence guard trips. A nonconvergent Newton
/// iteration on a trajectory that has already passed the guard is reported
/// as divergence; any other step error aborts the run after the sink has
/// seen the records produced so far.
pub fn run_simulation<P: FlowProblem + ?Sized>(
    space: Arc<TaylorHoodSpace>,
    config: SchemeConfig,
    problem: &P,
    ic: InitialCondition,
    sink: &mut dyn RunSink,
) -> Result<RunOutcome> {
    let mut sim = Simulation::new(space, config, problem, ic)?;
    let n_steps = config.num_steps()?;

    let mut records = Vec::with_capacity(n_steps + 1);
    let first = sim.record(None);
    sink.on_record(&first, sim.state(), None)?;
    let e0 = first.energy;
    records.push(first);

    let mut diverged = false;
    for _ in 0..n_steps {
        match sim.step() {
            Ok(report) => {
                let mut rec = sim.record(Some(&report));
                if !rec.energy.is_finite() || rec.energy > DIVERGENCE_GUARD * e0 {
                    rec.diverged = true;
                    diverged = true;
                }
                sink.on_record(&rec, sim.state(), Some(&report))?;
                records.push(rec);
                if diverged {
                    break;
                }
            }
            Err(Error::NonConvergence {
                step_norms,
                last_iterate,
            }) => {
                let u = FEFunction::new(
                    Arc::clone(sim.space()),
                    FieldKind::Velocity,
                    last_iterate,
                )?;
                let energy = diagnostics::kinetic_energy(&u);
                if !energy.is_finite() || energy >= DIVERGENCE_GUARD * e0 {
                    let (mx, my) = diagnostics::linear_momentum(&u);
                    let rec = DiagnosticsRecord {
                        step: sim.state().step + 1,
                        t: (sim.state().step + 1) as f64 * config.dt,
                        energy,
                        momentum_x: mx,
                        momentum_y: my,
                        ang_momentum: diagnostics::angular_momentum(&u),
                        div_norm: diagnostics::div_l2_norm(&u),
                        l2_error: None,
                        newton_iters: step_norms.len(),
                        nonlinear_residual: *step_norms.last().unwrap_or(&f64::NAN),
                        diverged: true,
                    };
                    sink.on_record(&rec, sim.state(), None)?;
                    records.push(rec);
                    diverged = true;
                    break;
                }
                return Err(Error::NonConvergence {
                    step_norms,
                    last_iterate: u.into_coeffs(),
                });
            }
            Err(e) => return Err(e),
        }
    }

    let state = sim.state();
    Ok(RunOutcome {
        records,
        diverged,
        final_velocity: state.u_curr.clone(),
        final_pressure: state.p_curr.clone(),
    })
}

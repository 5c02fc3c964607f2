//! The two benchmark flows: the standing (Gresho) vortex on the centered
//! unit square and the decaying lattice of counter-rotating vortices on the
//! unit square.

use crate::mesh::Rect;
use crate::timeloop::FlowProblem;

/// Standing-vortex velocity and pressure at a point. The field is a steady
/// Euler solution: rigid rotation inside r = 0.2, a decaying swirl up to
/// r = 0.4, and rest outside. The pressure constants make p continuous at
/// both circles and zero at rest.
pub fn gresho_exact(x: f64, y: f64) -> ([f64; 2], f64) {
    let r = x.hypot(y);
    // continuity at r = 0.4 fixes c2; continuity at r = 0.2 fixes c1
    let c2 = 6.0 - 4.0 * (0.4f64).ln();
    let c1 = c2 - 4.0 + 4.0 * (0.2f64).ln();
    if r <= 0.2 {
        ([-5.0 * y, 5.0 * x], 12.5 * r * r + c1)
    } else if r <= 0.4 {
        let s = 5.0 - 2.0 / r;
        (
            [s * y, -s * x],
            12.5 * r * r - 20.0 * r + 4.0 * r.ln() + c2,
        )
    } else {
        ([0.0, 0.0], 0.0)
    }
}

/// Lattice-vortex velocity and pressure at a point and time. The spatial
/// profile is a steady Euler solution; viscosity turns it into an exact
/// Navier-Stokes solution decaying like exp(-8 nu pi^2 t), with the pressure
/// decaying at twice that rate.
pub fn lattice_exact(x: f64, y: f64, t: f64, nu: f64) -> ([f64; 2], f64) {
    let tau = std::f64::consts::TAU; // 2 pi
    let (sx, cx) = (tau * x).sin_cos();
    let (sy, cy) = (tau * y).sin_cos();
    let decay = (-8.0 * nu * std::f64::consts::PI.powi(2) * t).exp();
    let v = [sx * sy * decay, cx * cy * decay];
    let q = -0.5 * (sx * sx + cy * cy);
    (v, q * decay * decay)
}

/// The standing vortex run: no viscosity, no forcing, homogeneous Dirichlet
/// walls (the exact field vanishes identically for r > 0.4).
pub struct Gresho;

impl Gresho {
    pub const DOMAIN: Rect = Rect {
        xmin: -0.5,
        xmax: 0.5,
        ymin: -0.5,
        ymax: 0.5,
    };
    pub const DEFAULT_NU: f64 = 0.0;
    pub const DEFAULT_NX: usize = 48;
}

impl FlowProblem for Gresho {
    fn initial_velocity(&self, x: f64, y: f64) -> [f64; 2] {
        gresho_exact(x, y).0
    }

    fn boundary_velocity(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
        [0.0, 0.0]
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    fn exact_velocity(&self, x: f64, y: f64, _t: f64) -> [f64; 2] {
        gresho_exact(x, y).0
    }
}

/// The lattice vortex run at a given viscosity: exact-trace Dirichlet data.
pub struct Lattice {
    pub nu: f64,
}

impl Lattice {
    pub const DOMAIN: Rect = Rect {
        xmin: 0.0,
        xmax: 1.0,
        ymin: 0.0,
        ymax: 1.0,
    };
    pub const DEFAULT_NU: f64 = 1e-7;
    pub const DEFAULT_NX: usize = 32;
}

impl FlowProblem for Lattice {
    fn initial_velocity(&self, x: f64, y: f64) -> [f64; 2] {
        lattice_exact(x, y, 0.0, self.nu).0
    }

    fn boundary_velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        lattice_exact(x, y, t, self.nu).0
    }

    fn has_exact_solution(&self) -> bool {
        true
    }

    fn exact_velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        lattice_exact(x, y, t, self.nu).0
    }
}

/// Analytic spatial gradient of the standing-vortex velocity, branchwise;
/// used by the steady-Euler residual checks. Undefined on the two circles.
pub fn gresho_velocity_grad(x: f64, y: f64) -> [[f64; 2]; 2] {
    let r = x.hypot(y);
    if r <= 0.2 {
        [[0.0, -5.0], [5.0, 0.0]]
    } else if r <= 0.4 {
        // u = s(r) (y, -x) with s = 5 - 2/r, ds/dr = 2/r^2
        let s = 5.0 - 2.0 / r;
        let ds = 2.0 / (r * r);
        let (rx, ry) = (x / r, y / r);
        [
            [ds * rx * y, s + ds * ry * y],
            [-s - ds * rx * x, -ds * ry * x],
        ]
    } else {
        [[0.0, 0.0], [0.0, 0.0]]
    }
}

/// Analytic pressure gradient of the standing vortex, branchwise.
pub fn gresho_pressure_grad(x: f64, y: f64) -> [f64; 2] {
    let r = x.hypot(y);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let dpdr = if r <= 0.2 {
        25.0 * r
    } else if r <= 0.4 {
        25.0 * r - 20.0 + 4.0 / r
    } else {
        0.0
    };
    [dpdr * x / r, dpdr * y / r]
}

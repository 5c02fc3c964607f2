//! Conserved-quantity functionals, error norms, and the CSV record format.
//!
//! The integrands of energy, momentum, angular momentum, and the divergence
//! norm are polynomial on each cell, so the degree-5 assembly rule evaluates
//! them exactly. Error norms against analytic fields use the degree-8 rule.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fem::assemble::{integrate_fields, ASSEMBLY_DEGREE, ERROR_DEGREE};
use crate::fem::space::FEFunction;

/// One row of the per-step diagnostics series.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub energy: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub ang_momentum: f64,
    pub div_norm: f64,
    /// Absent when the problem has no exact solution.
    pub l2_error: Option<f64>,
    pub newton_iters: usize,
    pub nonlinear_residual: f64,
    pub diverged: bool,
}

/// Kinetic energy (u, u) / 2.
pub fn kinetic_energy(u: &FEFunction) -> f64 {
    integrate_fields(u.space(), ASSEMBLY_DEGREE, &[u], &[], |_, vals, _, _| {
        0.5 * (vals[0][0] * vals[0][0] + vals[0][1] * vals[0][1])
    })
    .expect("assembly-degree rule always exists")
}

/// Componentwise integral of the velocity.
pub fn linear_momentum(u: &FEFunction) -> (f64, f64) {
    let mx = integrate_fields(u.space(), ASSEMBLY_DEGREE, &[u], &[], |_, v, _, _| v[0][0])
        .expect("assembly-degree rule always exists");
    let my = integrate_fields(u.space(), ASSEMBLY_DEGREE, &[u], &[], |_, v, _, _| v[0][1])
        .expect("assembly-degree rule always exists");
    (mx, my)
}

/// Integral of u_1 y - u_2 x, the scalar angular momentum about the origin.
pub fn angular_momentum(u: &FEFunction) -> f64 {
    integrate_fields(u.space(), ASSEMBLY_DEGREE, &[u], &[], |x, v, _, _| {
        v[0][0] * x[1] - v[0][1] * x[0]
    })
    .expect("assembly-degree rule always exists")
}

/// L2 norm of the pointwise divergence.
pub fn div_l2_norm(u: &FEFunction) -> f64 {
    integrate_fields(u.space(), ASSEMBLY_DEGREE, &[u], &[], |_, _, g, _| {
        let d = g[0][0][0] + g[0][1][1];
        d * d
    })
    .expect("assembly-degree rule always exists")
    .sqrt()
}

/// L2 distance between a discrete velocity and an analytic field.
pub fn l2_error(u: &FEFunction, exact: impl Fn(f64, f64) -> [f64; 2]) -> f64 {
    integrate_fields(u.space(), ERROR_DEGREE, &[u], &[], |x, vals, _, _| {
        let e = exact(x[0], x[1]);
        (vals[0][0] - e[0]).powi(2) + (vals[0][1] - e[1]).powi(2)
    })
    .expect("error-degree rule always exists")
    .sqrt()
}

pub const CSV_HEADER: &str =
    "step,t,energy,momentum_x,momentum_y,ang_momentum,div_norm,l2_error,newton_iters,nonlinear_residual,diverged";

/// Formats one record as a CSV row (no terminator). Floats use shortest
/// round-trip scientific notation; a missing error is an empty field.
pub fn csv_row(r: &DiagnosticsRecord) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{:e},{:e},{:e},{:e},{:e},{:e},",
        r.step, r.t, r.energy, r.momentum_x, r.momentum_y, r.ang_momentum, r.div_norm
    );
    if let Some(e) = r.l2_error {
        let _ = write!(s, "{e:e}");
    }
    let _ = write!(
        s,
        ",{},{:e},{}",
        r.newton_iters, r.nonlinear_residual, r.diverged
    );
    s
}

/// Writes a header line plus one row per record, newline-terminated.
pub fn write_csv(records: &[DiagnosticsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses a diagnostics CSV written by [`write_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "unexpected CSV header: {other:?}"
            )))
        }
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::invalid(format!(
                "line {}: expected 11 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let fnum = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::invalid(format!("line {}: bad float '{s}': {e}", lineno + 2)))
        };
        out.push(DiagnosticsRecord {
            step: fields[0]
                .parse()
                .map_err(|e| Error::invalid(format!("bad step: {e}")))?,
            t: fnum(fields[1])?,
            energy: fnum(fields[2])?,
            momentum_x: fnum(fields[3])?,
            momentum_y: fnum(fields[4])?,
            ang_momentum: fnum(fields[5])?,
            div_norm: fnum(fields[6])?,
            l2_error: if fields[7].is_empty() {
                None
            } else {
                Some(fnum(fields[7])?)
            },
            newton_iters: fields[8]
                .parse()
                .map_err(|e| Error::invalid(format!("bad iteration count: {e}")))?,
            nonlinear_residual: fnum(fields[9])?,
            diverged: match fields[10] {
                "true" => true,
                "false" => false,
                other => return Err(Error::invalid(format!("bad diverged flag '{other}'"))),
            },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::{interpolate_velocity, FEFunction, FieldKind, TaylorHoodSpace};
    use crate::mesh::{build_uniform_tri_mesh, Rect};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn space(nx: usize, rect: Rect) -> Arc<TaylorHoodSpace> {
        let mesh = Arc::new(build_uniform_tri_mesh(nx, nx, rect).unwrap());
        Arc::new(TaylorHoodSpace::new(mesh))
    }

    #[test]
    fn zero_field_has_zero_diagnostics() {
        let s = space(3, Rect::unit());
        let u = FEFunction::zeros(Arc::clone(&s), FieldKind::Velocity);
        assert_eq!(kinetic_energy(&u), 0.0);
        assert_eq!(linear_momentum(&u), (0.0, 0.0));
        assert_eq!(angular_momentum(&u), 0.0);
        assert_eq!(div_l2_norm(&u), 0.0);
    }

    #[test]
    fn rotation_field_angular_momentum() {
        // (y, -x) on the centered square: integrand y^2 + x^2, integral 1/6
        let s = space(8, Rect::centered_unit());
        let u = interpolate_velocity(&s, |x, y| [y, -x]);
        let m = angular_momentum(&u);
        assert!((m - 1.0 / 6.0).abs() <= 1e-14, "{m}");
    }

    #[test]
    fn functional_scaling_laws() {
        let s = space(4, Rect::unit());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..s.num_velocity_dofs())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let alpha: f64 = rng.random_range(0.5..2.0);
            let u = FEFunction::new(Arc::clone(&s), FieldKind::Velocity, coeffs.clone()).unwrap();
            let ua = FEFunction::new(
                Arc::clone(&s),
                FieldKind::Velocity,
                coeffs.iter().map(|c| alpha * c).collect(),
            )
            .unwrap();
            let e = kinetic_energy(&u);
            assert!((kinetic_energy(&ua) - alpha * alpha * e).abs() <= 1e-12 * e.abs().max(1.0));
            let (mx, my) = linear_momentum(&u);
            let (ax, ay) = linear_momentum(&ua);
            assert!((ax - alpha * mx).abs() <= 1e-13);
            assert!((ay - alpha * my).abs() <= 1e-13);
            let am = angular_momentum(&u);
            assert!((angular_momentum(&ua) - alpha * am).abs() <= 1e-13);
        }
    }

    #[test]
    fn angular_momentum_is_mass_pairing_with_rotation_interpolant() {
        let s = space(5, Rect::centered_unit());
        let mass = crate::fem::assemble::assemble_mass(&s);
        let phi = interpolate_velocity(&s, |x, y| [y, -x]);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..5 {
            let coeffs: Vec<f64> = (0..s.num_velocity_dofs())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let u = FEFunction::new(Arc::clone(&s), FieldKind::Velocity, coeffs).unwrap();
            let via_mass = mass.bilinear(u.coeffs(), phi.coeffs());
            let direct = angular_momentum(&u);
            assert!(
                (via_mass - direct).abs() <= 1e-12 * direct.abs().max(1.0),
                "{via_mass} vs {direct}"
            );
        }
    }

    #[test]
    fn l2_error_of_exact_function_is_zero() {
        let s = space(4, Rect::unit());
        let f = |x: f64, y: f64| [x * y, x - y * y];
        let u = interpolate_velocity(&s, f);
        assert!(l2_error(&u, f) <= 1e-13);
    }

    #[test]
    fn csv_round_trip_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<DiagnosticsRecord> = (0..1000)
            .map(|i| DiagnosticsRecord {
                step: i,
                t: i as f64 * 0.01,
                energy: rng.random_range(0.0..1.0),
                momentum_x: rng.random_range(-1.0..1.0),
                momentum_y: rng.random_range(-1.0..1.0),
                ang_momentum: rng.random_range(-1.0..1.0),
                div_norm: rng.random_range(0.0..1e-9),
                l2_error: if i % 7 == 0 {
                    None
                } else {
                    Some(rng.random_range(0.0..1.0))
                },
                newton_iters: (i % 5) as usize,
                nonlinear_residual: rng.random_range(0.0..1e-8),
                diverged: i == 999,
            })
            .collect();
        let dir = std::env::temp_dir().join(format!("emac-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        write_csv(&records, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(records.len(), back.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert_eq!(a.energy.to_bits(), b.energy.to_bits());
            assert_eq!(a.momentum_x.to_bits(), b.momentum_x.to_bits());
            assert_eq!(a.momentum_y.to_bits(), b.momentum_y.to_bits());
            assert_eq!(a.ang_momentum.to_bits(), b.ang_momentum.to_bits());
            assert_eq!(a.div_norm.to_bits(), b.div_norm.to_bits());
            assert_eq!(a.l2_error.map(f64::to_bits), b.l2_error.map(f64::to_bits));
            assert_eq!(a.nonlinear_residual.to_bits(), b.nonlinear_residual.to_bits());
            assert_eq!((a.step, a.newton_iters, a.diverged), (b.step, b.newton_iters, b.diverged));
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn csv_shape() {
        let dir = std::env::temp_dir().join(format!("emac-csvshape-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.csv");
        write_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));

        let one = DiagnosticsRecord {
            step: 0,
            t: 0.0,
            energy: 0.25,
            momentum_x: 0.0,
            momentum_y: 0.0,
            ang_momentum: 0.0,
            div_norm: 0.0,
            l2_error: None,
            newton_iters: 0,
            nonlinear_residual: 0.0,
            diverged: false,
        };
        write_csv(std::slice::from_ref(&one), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
        std::fs::remove_dir_all(&dir).ok();
    }
}

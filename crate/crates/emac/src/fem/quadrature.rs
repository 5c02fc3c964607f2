//! Quadrature rules on the reference triangle.
//!
//! Points are barycentric; weights sum to the reference-triangle area (1/2),
//! so the integral over a physical cell is `sum_q w_q * |det J| * f(x_q)`.
//! Low degrees come from closed-form symmetric rules; degrees above 5 use a
//! conical product of Gauss-Legendre rules, which has positive weights at any
//! order.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    exactness: usize,
}

impl QuadratureRule {
    /// Returns a rule exact for all polynomials of total degree `min_degree`.
    /// Degrees 1 through 10 are supported.
    pub fn with_min_degree(min_degree: usize) -> Result<Self> {
        match min_degree {
            0 | 1 => Ok(Self::centroid()),
            2 => Ok(Self::three_point()),
            3..=5 => Ok(Self::radon_seven_point()),
            6..=10 => {
                // n Gauss points per direction integrate total degree 2n-2
                // exactly after the (1 - eta) area factor is accounted for.
                let n = (min_degree + 3) / 2;
                Ok(Self::conical_product(n))
            }
            _ => Err(Error::Unsupported(format!(
                "no quadrature rule of degree {min_degree} (max 10)"
            ))),
        }
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Integrates `f(barycentric)` over the reference triangle.
    pub fn integrate_reference(&self, mut f: impl FnMut(&[f64; 3]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }

    fn centroid() -> Self {
        QuadratureRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![0.5],
            exactness: 1,
        }
    }

    fn three_point() -> Self {
        // interior symmetric points (2/3, 1/6, 1/6)
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        QuadratureRule {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 6.0; 3],
            exactness: 2,
        }
    }

    fn radon_seven_point() -> Self {
        let s15 = 15f64.sqrt();
        let a1 = (6.0 - s15) / 21.0;
        let b1 = (9.0 + 2.0 * s15) / 21.0;
        let w1 = (155.0 - s15) / 2400.0;
        let a2 = (6.0 + s15) / 21.0;
        let b2 = (9.0 - 2.0 * s15) / 21.0;
        let w2 = (155.0 + s15) / 2400.0;
        QuadratureRule {
            points: vec![
                [1.0 / 3.0; 3],
                [b1, a1, a1],
                [a1, b1, a1],
                [a1, a1, b1],
                [b2, a2, a2],
                [a2, b2, a2],
                [a2, a2, b2],
            ],
            weights: vec![9.0 / 80.0, w1, w1, w1, w2, w2, w2],
            exactness: 5,
        }
    }

    /// Conical product rule: x = xi (1 - eta), y = eta with Gauss-Legendre in
    /// both directions; the Jacobian (1 - eta) raises the eta-degree by one,
    /// so n points give exactness 2n - 2.
    fn conical_product(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre_unit(n);
        let mut pts = Vec::with_capacity(n * n);
        let mut ws = Vec::with_capacity(n * n);
        for (i, (&xi, &wi)) in nodes.iter().zip(&weights).enumerate() {
            let _ = i;
            for (&eta, &we) in nodes.iter().zip(&weights) {
                let x = xi * (1.0 - eta);
                let y = eta;
                pts.push([1.0 - x - y, x, y]);
                ws.push(wi * we * (1.0 - eta));
            }
        }
        QuadratureRule {
            points: pts,
            weights: ws,
            exactness: 2 * n - 2,
        }
    }
}

/// Gauss-Legendre nodes and weights on [0, 1], by Newton iteration on the
/// Legendre polynomial.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n {
        // Initial guess on [-1, 1].
        let mut x = (std::f64::consts::PI * (4.0 * k as f64 + 3.0) / (4.0 * n as f64 + 2.0)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[k] = 0.5 * (x + 1.0);
        weights[k] = 0.5 * w;
    }
    // ascending order for reproducibility
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].partial_cmp(&nodes[b]).unwrap());
    (
        idx.iter().map(|&i| nodes[i]).collect(),
        idx.iter().map(|&i| weights[i]).collect(),
    )
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Exact value of the reference-triangle monomial integral
/// `int x^a y^b = a! b! / (a + b + 2)!`.
pub fn reference_monomial_integral(a: u32, b: u32) -> f64 {
    // a! b! / (a+b+2)! evaluated without large intermediates:
    // 1/( (a+1)(a+2)...(a+b+2) / b! ) -- just do it in f64, degrees are small.
    let fact = |m: u32| -> f64 { (1..=m).map(|k| k as f64).product::<f64>().max(1.0) };
    fact(a) * fact(b) / fact(a + b + 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_exactness(rule: &QuadratureRule, degree: usize) {
        for total in 0..=degree as u32 {
            for a in 0..=total {
                let b = total - a;
                let got = rule.integrate_reference(|bary| {
                    let x = bary[1];
                    let y = bary[2];
                    x.powi(a as i32) * y.powi(b as i32)
                });
                let want = reference_monomial_integral(a, b);
                assert!(
                    (got - want).abs() <= 1e-14,
                    "x^{a} y^{b}: got {got}, want {want} (degree {degree})"
                );
            }
        }
    }

    #[test]
    fn constant_integrates_to_half() {
        for d in 1..=10 {
            let rule = QuadratureRule::with_min_degree(d).unwrap();
            let one = rule.integrate_reference(|_| 1.0);
            assert!((one - 0.5).abs() <= 1e-15, "degree {d}: {one}");
        }
    }

    #[test]
    fn monomial_sweep_all_degrees() {
        for d in 1..=10 {
            let rule = QuadratureRule::with_min_degree(d).unwrap();
            assert!(rule.exactness_degree() >= d);
            check_exactness(&rule, rule.exactness_degree());
        }
    }

    #[test]
    fn degree_five_example_value() {
        // int x^2 y^3 = 2! 3! / 7! = 1/420
        let rule = QuadratureRule::with_min_degree(5).unwrap();
        let got = rule.integrate_reference(|b| b[1].powi(2) * b[2].powi(3));
        assert!((got - 1.0 / 420.0).abs() <= 1e-14, "{got}");
    }

    #[test]
    fn weights_positive_and_sum_to_area() {
        for d in 1..=10 {
            let rule = QuadratureRule::with_min_degree(d).unwrap();
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            let s: f64 = rule.weights().iter().sum();
            assert!((s - 0.5).abs() <= 1e-14);
        }
    }

    #[test]
    fn unsupported_degree_errors() {
        assert!(QuadratureRule::with_min_degree(11).is_err());
    }
}

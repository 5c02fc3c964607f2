//! Lagrange bases on the reference triangle.
//!
//! Node order for the quadratic basis: the three vertices, then the midpoints
//! of edges (0,1), (1,2), (2,0). Gradients are with respect to the reference
//! coordinates (x, y) = (lambda_1, lambda_2).

use crate::error::{Error, Result};

/// Reference gradients of the barycentric coordinates.
pub const BARY_GRADS: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

/// Local edge endpoints matching the midpoint node order.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

fn check_bary(bary: &[f64; 3]) -> Result<()> {
    let sum: f64 = bary.iter().sum();
    if bary.iter().any(|&l| l < -1e-12) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "invalid barycentric coordinates {bary:?}"
        )));
    }
    Ok(())
}

/// Values and reference gradients of the six quadratic basis functions.
pub fn p2_basis_eval(bary: [f64; 3]) -> Result<([f64; 6], [[f64; 2]; 6])> {
    check_bary(&bary)?;
    Ok(p2_basis_eval_unchecked(bary))
}

pub(crate) fn p2_basis_eval_unchecked(bary: [f64; 3]) -> ([f64; 6], [[f64; 2]; 6]) {
    let mut values = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    for i in 0..3 {
        values[i] = bary[i] * (2.0 * bary[i] - 1.0);
        let g = 4.0 * bary[i] - 1.0;
        grads[i] = [g * BARY_GRADS[i][0], g * BARY_GRADS[i][1]];
    }
    for (k, [i, j]) in EDGE_VERTICES.into_iter().enumerate() {
        values[3 + k] = 4.0 * bary[i] * bary[j];
        grads[3 + k] = [
            4.0 * (bary[i] * BARY_GRADS[j][0] + bary[j] * BARY_GRADS[i][0]),
            4.0 * (bary[i] * BARY_GRADS[j][1] + bary[j] * BARY_GRADS[i][1]),
        ];
    }
    (values, grads)
}

/// Values and reference gradients of the three linear basis functions.
pub fn p1_basis_eval(bary: [f64; 3]) -> Result<([f64; 3], [[f64; 2]; 3])> {
    check_bary(&bary)?;
    Ok((bary, BARY_GRADS))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NODES: [[f64; 3]; 6] = [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ];

    #[test]
    fn lagrange_property() {
        for (i, node) in NODES.into_iter().enumerate() {
            let (vals, _) = p2_basis_eval(node).unwrap();
            for (j, v) in vals.into_iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() <= 1e-14, "phi_{j}({i}) = {v}");
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for bary in [
            [0.2, 0.3, 0.5],
            [0.11, 0.48, 0.41],
            [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ] {
            let (vals, grads) = p2_basis_eval(bary).unwrap();
            let s: f64 = vals.iter().sum();
            assert!((s - 1.0).abs() <= 1e-14);
            for d in 0..2 {
                let g: f64 = grads.iter().map(|gr| gr[d]).sum();
                assert!(g.abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn centroid_values() {
        let third = 1.0 / 3.0;
        let (vals, _) = p2_basis_eval([third; 3]).unwrap();
        for i in 0..3 {
            assert!((vals[i] + 1.0 / 9.0).abs() <= 1e-15, "vertex {i}: {}", vals[i]);
        }
        for k in 3..6 {
            assert!((vals[k] - 4.0 / 9.0).abs() <= 1e-15, "midpoint {k}: {}", vals[k]);
        }
    }

    #[test]
    fn rejects_invalid_coordinates() {
        assert!(p2_basis_eval([0.5, 0.6, 0.1]).is_err());
        assert!(p2_basis_eval([-0.1, 0.6, 0.5]).is_err());
        assert!(p1_basis_eval([0.7, 0.7, -0.4]).is_err());
    }
}

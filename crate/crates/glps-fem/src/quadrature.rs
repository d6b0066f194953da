//! Quadrature rules on the reference triangle and the reference edge.
//!
//! Triangle rules integrate over T = {(x, y) : x, y >= 0, x + y <= 1}, so
//! weights sum to 1/2 and a physical-cell integral is `2 * |K|` times the
//! weighted sum at mapped points. Degree 2 uses the classical midedge rule;
//! degrees 3 through 8 use a Duffy-transformed tensor Gauss-Legendre grid,
//! which stays exact for the requested degree because the transform adds
//! one polynomial degree via its Jacobian.

use crate::{Error, Result};

/// Quadrature rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub degree: usize,
}

/// Quadrature rule on the reference edge [0, 1].
#[derive(Debug, Clone)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub const MAX_DEGREE: usize = 8;

/// Rule exact for polynomials of total degree `degree` on the reference
/// triangle. Supported degrees are 1 through 8.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    match degree {
        1 | 2 => Ok(TriangleRule {
            points: vec![[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]],
            weights: vec![1.0 / 6.0; 3],
            degree: 2,
        }),
        3..=MAX_DEGREE => {
            // Duffy map (s, t) -> (s (1 - t), s t) with Jacobian s: the
            // integrand gains one degree in s, hence the +2 below.
            let m = (degree + 2).div_ceil(2);
            let (s_pts, s_wts) = gauss_legendre_01(m);
            let mut points = Vec::with_capacity(m * m);
            let mut weights = Vec::with_capacity(m * m);
            for (&s, &ws) in s_pts.iter().zip(&s_wts) {
                for (&t, &wt) in s_pts.iter().zip(&s_wts) {
                    points.push([s * (1.0 - t), s * t]);
                    weights.push(ws * wt * s);
                }
            }
            Ok(TriangleRule {
                points,
                weights,
                degree,
            })
        }
        _ => Err(Error::InvalidArgument(format!(
            "triangle quadrature degree must be in 1..={MAX_DEGREE}, got {degree}"
        ))),
    }
}

/// Gauss-Legendre rule on [0, 1] exact for polynomials of degree `degree`.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree == 0 || degree > 2 * MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "edge quadrature degree must be in 1..={}, got {degree}",
            2 * MAX_DEGREE
        )));
    }
    let m = (degree + 1).div_ceil(2);
    let (points, weights) = gauss_legendre_01(m);
    Ok(EdgeRule {
        points,
        weights,
        degree,
    })
}

/// Nodes and weights of the m-point Gauss-Legendre rule mapped to [0, 1].
///
/// Roots of the Legendre polynomial P_m are found by Newton iteration from
/// the Chebyshev initial guess; the three-term recurrence supplies P_m and
/// its derivative.
fn gauss_legendre_01(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut points = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(m, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1]. The cosine guess enumerates roots in
        // descending order, so store them reversed to get ascending nodes.
        points[m - 1 - i] = 0.5 * (x + 1.0);
        weights[m - 1 - i] = 0.5 * w;
    }
    (points, weights)
}

/// Value and derivative of the Legendre polynomial P_m at x.
fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let d = m as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}

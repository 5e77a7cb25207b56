//! Gauss-type quadrature on the reference edge `[0, 1]` and the reference
//! triangle `{(x, y) : x, y >= 0, x + y <= 1}`.
//!
//! Triangle rules are built by collapsing a tensor Gauss-Legendre rule onto
//! the triangle (Duffy transform), so every weight is positive and the rule of
//! requested degree `d` uses `ceil((d + 2) / 2)^2` points.

use crate::error::{HdgError, Result};

/// Highest polynomial degree for which rules can be requested.
pub const MAX_QUADRATURE_DEGREE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadratureDomain {
    Triangle,
    Edge,
}

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub domain: QuadratureDomain,
    /// Reference coordinates. Edge rules store the abscissa in `[0]` and `0.0`
    /// in `[1]`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Measure of the reference domain (1/2 for the triangle, 1 for the edge).
    pub fn reference_measure(&self) -> f64 {
        match self.domain {
            QuadratureDomain::Triangle => 0.5,
            QuadratureDomain::Edge => 1.0,
        }
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

/// Quadrature rule on `domain` exact for polynomials up to `degree`.
pub fn quadrature(domain: QuadratureDomain, degree: usize) -> Result<QuadratureRule> {
    if degree == 0 || degree > MAX_QUADRATURE_DEGREE {
        return Err(HdgError::UnsupportedQuadratureDegree(degree));
    }
    Ok(match domain {
        QuadratureDomain::Edge => {
            let n = (degree + 2) / 2;
            let (x, w) = gauss_legendre_unit(n);
            QuadratureRule {
                domain,
                points: x.iter().map(|&s| [s, 0.0]).collect(),
                weights: w,
                exactness_degree: 2 * n - 1,
            }
        }
        QuadratureDomain::Triangle => {
            // x^a y^b maps to xi^a (1 - xi)^(b + 1) eta^b: degree d + 1 in xi.
            let n = (degree + 3) / 2;
            let (x, w) = gauss_legendre_unit(n);
            let mut points = Vec::with_capacity(n * n);
            let mut weights = Vec::with_capacity(n * n);
            for (xi, wi) in x.iter().zip(&w) {
                for (eta, wj) in x.iter().zip(&w) {
                    points.push([*xi, eta * (1.0 - xi)]);
                    weights.push(wi * wj * (1.0 - xi));
                }
            }
            QuadratureRule {
                domain,
                points,
                weights,
                exactness_degree: 2 * n - 2,
            }
        }
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, via Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        // map [-1, 1] -> [0, 1], ascending order
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

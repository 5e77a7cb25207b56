//! Polynomial bases on the reference triangle and the reference edge.
//!
//! Every basis is stored as a coefficient table over monomials, so values,
//! gradients and Hessians all come from the same representation.

use super::affine::AffineMap;
use super::quadrature::{quadrature, QuadratureDomain};
use crate::error::{HdgError, Result};

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 4;

const MAX_MONOMIALS: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 2) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    /// `P_k` on the reference triangle, orthonormal in `L^2(T^)`.
    CellOrthonormal,
    /// Nodal `P_k` on the reference triangle with equispaced nodes.
    CellLagrange,
    /// `P_k` on `[0, 1]`, scaled Legendre polynomials (orthonormal in `L^2(0, 1)`).
    FacetLegendre,
}

impl BasisKind {
    pub fn is_cell(self) -> bool {
        !matches!(self, BasisKind::FacetLegendre)
    }
}

#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    degree: usize,
    /// Monomial exponents `(a, b)` for `x^a y^b`; facet bases use `b = 0`.
    exponents: Vec<(i32, i32)>,
    /// Row-major `dim x exponents.len()`.
    coeffs: Vec<f64>,
}

/// Dimension of `P_k` on a triangle.
pub fn dim_triangle(k: usize) -> usize {
    (k + 1) * (k + 2) / 2
}

fn triangle_exponents(k: usize) -> Vec<(i32, i32)> {
    let mut e = Vec::with_capacity(dim_triangle(k));
    for total in 0..=k as i32 {
        for b in 0..=total {
            e.push((total - b, b));
        }
    }
    e
}

impl Basis {
    /// Build a basis of degree `degree` (0 is accepted: it carries the
    /// piecewise-constant pressure space for `k = 1`).
    pub fn new(kind: BasisKind, degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(HdgError::UnsupportedDegree(degree));
        }
        match kind {
            BasisKind::CellOrthonormal => Ok(Self::orthonormal_triangle(degree)),
            BasisKind::CellLagrange => Self::lagrange_triangle(degree),
            BasisKind::FacetLegendre => Ok(Self::legendre_edge(degree)),
        }
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len() / self.exponents.len()
    }

    pub fn coefficient_table(&self) -> &[f64] {
        &self.coeffs
    }

    fn orthonormal_triangle(k: usize) -> Self {
        let exponents = triangle_exponents(k);
        let n = exponents.len();
        let rule = quadrature(QuadratureDomain::Triangle, (2 * k).max(1)).expect("degree in range");
        let mono: Vec<Vec<f64>> = rule
            .points
            .iter()
            .map(|p| exponents.iter().map(|&(a, b)| p[0].powi(a) * p[1].powi(b)).collect())
            .collect();
        let inner = |u: &[f64], v: &[f64]| -> f64 {
            let mut s = 0.0;
            for (q, w) in rule.weights.iter().enumerate() {
                let mut fu = 0.0;
                let mut fv = 0.0;
                for m in 0..n {
                    fu += u[m] * mono[q][m];
                    fv += v[m] * mono[q][m];
                }
                s += w * fu * fv;
            }
            s
        };
        // modified Gram-Schmidt, two passes
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            for _ in 0..2 {
                for r in &rows {
                    let proj = inner(&c, r);
                    for m in 0..n {
                        c[m] -= proj * r[m];
                    }
                }
            }
            let norm = inner(&c, &c).sqrt();
            for x in c.iter_mut() {
                *x /= norm;
            }
            rows.push(c);
        }
        Self {
            kind: BasisKind::CellOrthonormal,
            degree: k,
            exponents,
            coeffs: rows.concat(),
        }
    }

    fn lagrange_triangle(k: usize) -> Result<Self> {
        let exponents = triangle_exponents(k);
        let n = exponents.len();
        let nodes: Vec<[f64; 2]> = if k == 0 {
            vec![[1.0 / 3.0, 1.0 / 3.0]]
        } else {
            let mut v = Vec::with_capacity(n);
            for j in 0..=k {
                for i in 0..=(k - j) {
                    v.push([i as f64 / k as f64, j as f64 / k as f64]);
                }
            }
            v
        };
        // V[node][mono]; basis coefficients C satisfy C V^T = I.
        let vand = faer::Mat::<f64>::from_fn(n, n, |r, c| {
            let (a, b) = exponents[c];
            nodes[r][0].powi(a) * nodes[r][1].powi(b)
        });
        let lu = vand.partial_piv_lu();
        let inv = faer::linalg::solvers::DenseSolveCore::inverse(&lu);
        // column i of V^{-1} holds the monomial coefficients of basis i
        let mut coeffs = vec![0.0; n * n];
        for i in 0..n {
            for m in 0..n {
                coeffs[i * n + m] = inv[(m, i)];
            }
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(HdgError::SingularLocalSystem("Lagrange Vandermonde".into()));
        }
        Ok(Self {
            kind: BasisKind::CellLagrange,
            degree: k,
            exponents,
            coeffs,
        })
    }

    fn legendre_edge(k: usize) -> Self {
        // P_j(2s - 1) expanded in powers of s via the recurrence on coefficient vectors.
        let n = k + 1;
        let mut polys: Vec<Vec<f64>> = Vec::with_capacity(n);
        polys.push({
            let mut c = vec![0.0; n];
            c[0] = 1.0;
            c
        });
        if n > 1 {
            let mut c = vec![0.0; n];
            c[0] = -1.0;
            c[1] = 2.0;
            polys.push(c);
        }
        for j in 2..n {
            let jf = j as f64;
            let mut c = vec![0.0; n];
            // j P_j = (2j - 1)(2s - 1) P_{j-1} - (j - 1) P_{j-2}
            for m in 0..n {
                let p1 = polys[j - 1][m];
                c[m] -= (2.0 * jf - 1.0) * p1;
                if m + 1 < n {
                    c[m + 1] += 2.0 * (2.0 * jf - 1.0) * p1;
                }
                c[m] -= (jf - 1.0) * polys[j - 2][m];
            }
            for x in c.iter_mut() {
                *x /= jf;
            }
            polys.push(c);
        }
        for (j, c) in polys.iter_mut().enumerate() {
            let scale = (2.0 * j as f64 + 1.0).sqrt();
            for x in c.iter_mut() {
                *x *= scale;
            }
        }
        Self {
            kind: BasisKind::FacetLegendre,
            degree: k,
            exponents: (0..n as i32).map(|a| (a, 0)).collect(),
            coeffs: polys.concat(),
        }
    }

    fn coeff(&self, i: usize, m: usize) -> f64 {
        self.coeffs[i * self.exponents.len() + m]
    }

    /// Values of every basis function at one reference point.
    pub fn values_at(&self, p: [f64; 2], out: &mut [f64]) {
        let nm = self.exponents.len();
        let mut mono = [0.0; MAX_MONOMIALS];
        for (m, &(a, b)) in self.exponents.iter().enumerate() {
            mono[m] = p[0].powi(a) * p[1].powi(b);
        }
        for (i, o) in out.iter_mut().enumerate().take(self.dim()) {
            let row = &self.coeffs[i * nm..(i + 1) * nm];
            *o = row.iter().zip(&mono[..nm]).map(|(c, m)| c * m).sum();
        }
    }

    /// Reference gradients of every basis function at one point.
    pub fn ref_gradients_at(&self, p: [f64; 2], out: &mut [[f64; 2]]) {
        let nm = self.exponents.len();
        let mut dx = [0.0; MAX_MONOMIALS];
        let mut dy = [0.0; MAX_MONOMIALS];
        for (m, &(a, b)) in self.exponents.iter().enumerate() {
            if a > 0 {
                dx[m] = a as f64 * p[0].powi(a - 1) * p[1].powi(b);
            }
            if b > 0 {
                dy[m] = b as f64 * p[0].powi(a) * p[1].powi(b - 1);
            }
        }
        for (i, o) in out.iter_mut().enumerate().take(self.dim()) {
            let row = &self.coeffs[i * nm..(i + 1) * nm];
            let mut g = [0.0; 2];
            for m in 0..nm {
                g[0] += row[m] * dx[m];
                g[1] += row[m] * dy[m];
            }
            *o = g;
        }
    }

    /// Reference Hessians `[d_xx, d_xy, d_yy]` at one point.
    pub fn ref_hessians_at(&self, p: [f64; 2], out: &mut [[f64; 3]]) {
        let nm = self.exponents.len();
        let d = |a: i32, b: i32, da: i32, db: i32| -> f64 {
            if a < da || b < db {
                return 0.0;
            }
            let fa: f64 = (0..da).map(|j| (a - j) as f64).product();
            let fb: f64 = (0..db).map(|j| (b - j) as f64).product();
            fa * fb * p[0].powi(a - da) * p[1].powi(b - db)
        };
        for (i, o) in out.iter_mut().enumerate().take(self.dim()) {
            let mut h = [0.0; 3];
            for m in 0..nm {
                let (a, b) = self.exponents[m];
                let c = self.coeff(i, m);
                h[0] += c * d(a, b, 2, 0);
                h[1] += c * d(a, b, 1, 1);
                h[2] += c * d(a, b, 0, 2);
            }
            *o = h;
        }
    }

    /// Value table `(function, point)` at reference points.
    pub fn eval(&self, points: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        self.check_points(points)?;
        let n = self.dim();
        let mut table = vec![vec![0.0; points.len()]; n];
        let mut buf = vec![0.0; n];
        for (q, p) in points.iter().enumerate() {
            self.values_at(*p, &mut buf);
            for i in 0..n {
                table[i][q] = buf[i];
            }
        }
        Ok(table)
    }

    /// Physical gradient table `(function, point)` for reference points mapped by `map`.
    pub fn eval_grad(&self, map: &AffineMap, points: &[[f64; 2]]) -> Result<Vec<Vec<[f64; 2]>>> {
        self.check_points(points)?;
        let n = self.dim();
        let mut table = vec![vec![[0.0; 2]; points.len()]; n];
        let mut buf = vec![[0.0; 2]; n];
        for (q, p) in points.iter().enumerate() {
            self.ref_gradients_at(*p, &mut buf);
            for i in 0..n {
                table[i][q] = if self.kind.is_cell() {
                    map.push_gradient(buf[i])
                } else {
                    buf[i]
                };
            }
        }
        Ok(table)
    }

    fn check_points(&self, points: &[[f64; 2]]) -> Result<()> {
        let tol = 1e-12;
        for p in points {
            let inside = if self.kind.is_cell() {
                p[0] >= -tol && p[1] >= -tol && p[0] + p[1] <= 1.0 + tol
            } else {
                p[0] >= -tol && p[0] <= 1.0 + tol
            };
            if !inside {
                return Err(HdgError::PointOutsideReference(*p));
            }
        }
        Ok(())
    }

    /// Coefficients of the `L^2(T^)` projection of `f` onto this basis.
    ///
    /// Only meaningful for orthonormal bases (Gram matrix = identity).
    pub fn project_reference(&self, f: impl Fn([f64; 2]) -> f64, quad_degree: usize) -> Result<Vec<f64>> {
        let domain = if self.kind.is_cell() {
            QuadratureDomain::Triangle
        } else {
            QuadratureDomain::Edge
        };
        let rule = quadrature(domain, quad_degree)?;
        let mut c = vec![0.0; self.dim()];
        let mut buf = vec![0.0; self.dim()];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            self.values_at(*p, &mut buf);
            let fv = f(*p);
            for (ci, bi) in c.iter_mut().zip(&buf) {
                *ci += w * fv * bi;
            }
        }
        Ok(c)
    }

    /// Evaluate the expansion `sum_i c_i phi_i` at one reference point.
    pub fn expand_at(&self, coeffs: &[f64], p: [f64; 2]) -> f64 {
        let mut buf = vec![0.0; self.dim()];
        self.values_at(p, &mut buf);
        buf.iter().zip(coeffs).map(|(b, c)| b * c).sum()
    }

    /// Reference-domain Gram matrix, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let domain = if self.kind.is_cell() {
            QuadratureDomain::Triangle
        } else {
            QuadratureDomain::Edge
        };
        let rule = quadrature(domain, (2 * self.degree).max(1)).expect("degree in range");
        let n = self.dim();
        let mut g = vec![0.0; n * n];
        let mut buf = vec![0.0; n];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            self.values_at(*p, &mut buf);
            for i in 0..n {
                for j in 0..n {
                    g[i * n + j] += w * buf[i] * buf[j];
                }
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        for k in 0..=MAX_DEGREE {
            let c = Basis::new(BasisKind::CellOrthonormal, k).unwrap();
            assert_eq!(c.dim(), (k + 1) * (k + 2) / 2);
            let f = Basis::new(BasisKind::FacetLegendre, k).unwrap();
            assert_eq!(f.dim(), k + 1);
        }
        assert!(matches!(
            Basis::new(BasisKind::CellOrthonormal, 5),
            Err(HdgError::UnsupportedDegree(5))
        ));
    }

    #[test]
    fn orthonormal_gram_is_identity() {
        for kind in [BasisKind::CellOrthonormal, BasisKind::FacetLegendre] {
            for k in 0..=MAX_DEGREE {
                let b = Basis::new(kind, k).unwrap();
                let g = b.gram();
                let n = b.dim();
                for i in 0..n {
                    for j in 0..n {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((g[i * n + j] - e).abs() < 1e-12, "{kind:?} k={k} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn lagrange_p1_is_barycentric() {
        let b = Basis::new(BasisKind::CellLagrange, 1).unwrap();
        let t = b.eval(&[[1.0 / 3.0, 1.0 / 3.0]]).unwrap();
        for row in &t {
            assert!((row[0] - 1.0 / 3.0).abs() < 1e-14);
        }
        for p in [[0.1, 0.2], [0.7, 0.0], [0.25, 0.5]] {
            let t = b.eval(&[p]).unwrap();
            let s: f64 = t.iter().map(|r| r[0]).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lagrange_gram_is_spd() {
        for k in 1..=MAX_DEGREE {
            let b = Basis::new(BasisKind::CellLagrange, k).unwrap();
            let n = b.dim();
            let g = faer::Mat::<f64>::from_fn(n, n, |i, j| b.gram()[i * n + j]);
            assert!(g.llt(faer::Side::Lower).is_ok(), "k={k}");
        }
    }

    #[test]
    fn outside_points_rejected() {
        let b = Basis::new(BasisKind::CellOrthonormal, 1).unwrap();
        assert!(b.eval(&[[0.8, 0.8]]).is_err());
    }

    #[test]
    fn edge_legendre_reproduces_polynomials() {
        let b = Basis::new(BasisKind::FacetLegendre, 3).unwrap();
        let f = |p: [f64; 2]| 2.0 * p[0].powi(3) - p[0] + 0.5;
        let c = b.project_reference(f, 8).unwrap();
        for s in [0.0, 0.13, 0.5, 0.99, 1.0] {
            assert!((b.expand_at(&c, [s, 0.0]) - f([s, 0.0])).abs() < 1e-12);
        }
    }
}

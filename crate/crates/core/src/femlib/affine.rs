//! Affine maps from the reference triangle onto physical triangles.

use crate::error::{HdgError, Result};

/// `x = translation + jacobian * xi`.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    /// Row-major 2x2.
    pub jacobian: [[f64; 2]; 2],
    pub translation: [f64; 2],
    pub det: f64,
    /// Inverse transpose of the Jacobian, row-major.
    pub inv_t: [[f64; 2]; 2],
}

impl AffineMap {
    /// Map sending the reference vertices `(0,0), (1,0), (0,1)` to `v[0], v[1], v[2]`.
    pub fn from_vertices(v: [[f64; 2]; 3]) -> Result<Self> {
        let jacobian = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        if !(det > 0.0) {
            return Err(HdgError::DegenerateCell { det });
        }
        let inv_t = [
            [jacobian[1][1] / det, -jacobian[1][0] / det],
            [-jacobian[0][1] / det, jacobian[0][0] / det],
        ];
        Ok(Self {
            jacobian,
            translation: v[0],
            det,
            inv_t,
        })
    }

    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [
            self.translation[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.translation[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    pub fn inverse(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.translation[0], x[1] - self.translation[1]];
        // J^{-1} = (J^{-T})^T
        let it = &self.inv_t;
        [it[0][0] * d[0] + it[1][0] * d[1], it[0][1] * d[0] + it[1][1] * d[1]]
    }

    /// Physical gradient from a reference gradient: `J^{-T} g`.
    #[inline]
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let it = &self.inv_t;
        [it[0][0] * g[0] + it[0][1] * g[1], it[1][0] * g[0] + it[1][1] * g[1]]
    }

    /// Physical Hessian `[xx, xy, yy]` from a reference Hessian: `J^{-T} H J^{-1}`.
    pub fn push_hessian(&self, h: [f64; 3]) -> [f64; 3] {
        let it = &self.inv_t;
        let href = [[h[0], h[1]], [h[1], h[2]]];
        let mut out = [[0.0; 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, o) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..2 {
                    for d in 0..2 {
                        s += it[a][c] * href[c][d] * it[b][d];
                    }
                }
                *o = s;
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }

    /// Area of the physical triangle.
    pub fn area(&self) -> f64 {
        0.5 * self.det
    }
}

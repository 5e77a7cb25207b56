//! Tabulated bases on the reference triangle and its three edges for one
//! polynomial degree and one pair of quadrature rules.

use super::basis::{Basis, BasisKind};
use super::quadrature::{quadrature, QuadratureDomain, QuadratureRule};
use super::{cell_quadrature_degree, facet_quadrature_degree};
use crate::error::{HdgError, Result};

/// Reference vertices `(0,0), (1,0), (0,1)`.
pub const REFERENCE_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Point at parameter `t` on reference edge `e`, which runs from vertex
/// `e+1` to vertex `e+2` (indices mod 3).
pub fn edge_reference_point(e: usize, t: f64) -> [f64; 2] {
    let a = REFERENCE_VERTICES[(e + 1) % 3];
    let b = REFERENCE_VERTICES[(e + 2) % 3];
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

#[derive(Debug, Clone)]
pub struct ReferenceElement {
    pub k: usize,
    /// Scalar `P_k`, orthonormal; each velocity component uses it.
    pub velocity: Basis,
    /// Scalar `P_{k-1}`, orthonormal.
    pub pressure: Basis,
    /// `P_k` on an edge, orthonormal on `[0, 1]`.
    pub trace: Basis,
    pub cell_rule: QuadratureRule,
    pub edge_rule: QuadratureRule,
    /// `[q * nv + i]`
    pub vel_vals: Vec<f64>,
    /// Reference gradients, `[q * nv + i]`.
    pub vel_grads: Vec<[f64; 2]>,
    /// Reference Hessians, `[q * nv + i]`.
    pub vel_hessians: Vec<[f64; 3]>,
    pub pres_vals: Vec<f64>,
    pub pres_grads: Vec<[f64; 2]>,
    /// Per local edge, `[q * nv + i]`.
    pub edge_vel_vals: [Vec<f64>; 3],
    pub edge_vel_grads: [Vec<[f64; 2]>; 3],
    pub edge_pres_vals: [Vec<f64>; 3],
    /// Trace basis at edge points, forward (`[q * nt + i]`) and reversed parameter.
    pub trace_fwd: Vec<f64>,
    pub trace_rev: Vec<f64>,
}

impl ReferenceElement {
    /// Tables with the default assembly quadrature for degree `k`.
    pub fn new(k: usize) -> Result<Self> {
        Self::with_quadrature(k, cell_quadrature_degree(k), facet_quadrature_degree(k))
    }

    pub fn with_quadrature(k: usize, cell_degree: usize, edge_degree: usize) -> Result<Self> {
        if k == 0 {
            return Err(HdgError::UnsupportedDegree(k));
        }
        let velocity = Basis::new(BasisKind::CellOrthonormal, k)?;
        let pressure = Basis::new(BasisKind::CellOrthonormal, k - 1)?;
        let trace = Basis::new(BasisKind::FacetLegendre, k)?;
        let cell_rule = quadrature(QuadratureDomain::Triangle, cell_degree)?;
        let edge_rule = quadrature(QuadratureDomain::Edge, edge_degree)?;
        let (nv, np, nt) = (velocity.dim(), pressure.dim(), trace.dim());

        let mut vel_vals = vec![0.0; cell_rule.len() * nv];
        let mut vel_grads = vec![[0.0; 2]; cell_rule.len() * nv];
        let mut vel_hessians = vec![[0.0; 3]; cell_rule.len() * nv];
        let mut pres_vals = vec![0.0; cell_rule.len() * np];
        let mut pres_grads = vec![[0.0; 2]; cell_rule.len() * np];
        for (q, p) in cell_rule.points.iter().enumerate() {
            velocity.values_at(*p, &mut vel_vals[q * nv..(q + 1) * nv]);
            velocity.ref_gradients_at(*p, &mut vel_grads[q * nv..(q + 1) * nv]);
            velocity.ref_hessians_at(*p, &mut vel_hessians[q * nv..(q + 1) * nv]);
            pressure.values_at(*p, &mut pres_vals[q * np..(q + 1) * np]);
            pressure.ref_gradients_at(*p, &mut pres_grads[q * np..(q + 1) * np]);
        }

        let nq = edge_rule.len();
        let tab = |e: usize| {
            let mut v = vec![0.0; nq * nv];
            let mut g = vec![[0.0; 2]; nq * nv];
            let mut pv = vec![0.0; nq * np];
            for (q, s) in edge_rule.points.iter().enumerate() {
                let p = edge_reference_point(e, s[0]);
                velocity.values_at(p, &mut v[q * nv..(q + 1) * nv]);
                velocity.ref_gradients_at(p, &mut g[q * nv..(q + 1) * nv]);
                pressure.values_at(p, &mut pv[q * np..(q + 1) * np]);
            }
            (v, g, pv)
        };
        let (v0, g0, p0) = tab(0);
        let (v1, g1, p1) = tab(1);
        let (v2, g2, p2) = tab(2);

        let mut trace_fwd = vec![0.0; nq * nt];
        let mut trace_rev = vec![0.0; nq * nt];
        for (q, s) in edge_rule.points.iter().enumerate() {
            trace.values_at([s[0], 0.0], &mut trace_fwd[q * nt..(q + 1) * nt]);
            trace.values_at([1.0 - s[0], 0.0], &mut trace_rev[q * nt..(q + 1) * nt]);
        }

        Ok(Self {
            k,
            velocity,
            pressure,
            trace,
            cell_rule,
            edge_rule,
            vel_vals,
            vel_grads,
            vel_hessians,
            pres_vals,
            pres_grads,
            edge_vel_vals: [v0, v1, v2],
            edge_vel_grads: [g0, g1, g2],
            edge_pres_vals: [p0, p1, p2],
            trace_fwd,
            trace_rev,
        })
    }

    /// Scalar velocity basis size `dim P_k`.
    pub fn nv(&self) -> usize {
        self.velocity.dim()
    }

    /// Cell pressure basis size `dim P_{k-1}`.
    pub fn np(&self) -> usize {
        self.pressure.dim()
    }

    /// Trace basis size `k + 1`.
    pub fn nt(&self) -> usize {
        self.trace.dim()
    }

    /// Trace basis values at edge point `q`, seen from a cell whose local
    /// edge runs with (`aligned`) or against the facet's canonical direction.
    pub fn trace_at(&self, q: usize, aligned: bool) -> &[f64] {
        let nt = self.nt();
        let t = if aligned { &self.trace_fwd } else { &self.trace_rev };
        &t[q * nt..(q + 1) * nt]
    }

    /// Canonical facet parameter of local edge parameter `t`.
    pub fn canonical_param(t: f64, aligned: bool) -> f64 {
        if aligned {
            t
        } else {
            1.0 - t
        }
    }
}

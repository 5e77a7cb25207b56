//! Error norms, convergence rates, conservation checks and the discrete
//! norms of the analysis.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{HdgError, Result};
use crate::femlib::{error_quadrature_degree, facet_quadrature_degree, quadrature, QuadratureDomain, ReferenceElement};
use crate::forms::{LocalBlock, PhysicalParams, StepInput};
use crate::mesh::{FacetTag, Mesh, Subdomain};
use crate::scenarios::{ExactSolution, FlowData};
use crate::solver::Assembler;
use crate::spaces::{l2_project_cell, l2_project_facet, l2_project_facet_vector, DofSystem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// Broken `H^1` seminorm in the free-flow region plus `L^2` in the porous region.
    pub e_u_energy: f64,
    pub e_u_l2: f64,
    pub e_p_l2: f64,
    pub time: f64,
    pub h_max: f64,
    pub dt: Option<f64>,
    pub cells: usize,
}

/// Errors of `coeffs` against `exact` at time `t`.
pub fn compute_errors(mesh: &Mesh, dofs: &DofSystem, coeffs: &[f64], exact: &dyn ExactSolution, t: f64) -> Result<ErrorReport> {
    let k = dofs.k;
    let re = ReferenceElement::with_quadrature(k, error_quadrature_degree(k), facet_quadrature_degree(k))?;
    let (nv, np) = (re.nv(), re.np());
    let parts: Vec<[f64; 3]> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let sub = mesh.cells[c].subdomain;
            let map = mesh.cell_map(c);
            let ou = dofs.cell_velocity(c);
            let op = dofs.cell_pressure(c);
            let mut acc = [0.0; 3];
            for (q, w) in re.cell_rule.weights.iter().enumerate() {
                let wq = w * map.det;
                let x = map.map(re.cell_rule.points[q]);
                let phi = &re.vel_vals[q * nv..(q + 1) * nv];
                let mut uh = [0.0; 2];
                let mut gh = [[0.0; 2]; 2];
                for i in 0..nv {
                    let g = map.push_gradient(re.vel_grads[q * nv + i]);
                    for a in 0..2 {
                        let c = coeffs[ou + a * nv + i];
                        uh[a] += c * phi[i];
                        gh[a][0] += c * g[0];
                        gh[a][1] += c * g[1];
                    }
                }
                let ph: f64 = (0..np).map(|l| coeffs[op + l] * re.pres_vals[q * np + l]).sum();
                let u = exact.velocity(sub, x, t);
                let eu = (u[0] - uh[0]).powi(2) + (u[1] - uh[1]).powi(2);
                acc[1] += wq * eu;
                acc[2] += wq * (exact.pressure(sub, x, t) - ph).powi(2);
                match sub {
                    Subdomain::Stokes => {
                        let g = exact.velocity_s_grad(x, t);
                        let mut s = 0.0;
                        for a in 0..2 {
                            for b in 0..2 {
                                s += (g[a][b] - gh[a][b]).powi(2);
                            }
                        }
                        acc[0] += wq * s;
                    }
                    Subdomain::Darcy => acc[0] += wq * eu,
                }
            }
            acc
        })
        .collect();
    let sum = parts.iter().fold([0.0; 3], |a, b| [a[0] + b[0], a[1] + b[1], a[2] + b[2]]);
    Ok(ErrorReport {
        e_u_energy: sum[0].sqrt(),
        e_u_l2: sum[1].sqrt(),
        e_p_l2: sum[2].sqrt(),
        time: t,
        h_max: mesh.h_max,
        dt: None,
        cells: mesh.num_cells(),
    })
}

/// What the rates are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAxis {
    MeshSize,
    TimeStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub report: ErrorReport,
    /// `None` on the first row.
    pub rates: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub axis: RateAxis,
    pub rows: Vec<RateRow>,
}

/// Observed orders `log(e_{i-1}/e_i) / log(s_{i-1}/s_i)` with `s` the mesh
/// size or the time step.
pub fn rate_table(reports: &[ErrorReport], axis: RateAxis) -> Result<RateTable> {
    let scale = |r: &ErrorReport| -> Result<f64> {
        match axis {
            RateAxis::MeshSize => Ok(r.h_max),
            RateAxis::TimeStep => r
                .dt
                .ok_or_else(|| HdgError::InvalidParameter("temporal rates need a time step on every report".into())),
        }
    };
    let mut rows = Vec::with_capacity(reports.len());
    for (i, r) in reports.iter().enumerate() {
        let rates = if i == 0 {
            None
        } else {
            let p = &reports[i - 1];
            let ratio = (scale(p)? / scale(r)?).ln();
            let rate = |a: f64, b: f64| (a / b).ln() / ratio;
            Some([
                rate(p.e_u_energy, r.e_u_energy),
                rate(p.e_u_l2, r.e_u_l2),
                rate(p.e_p_l2, r.e_p_l2),
            ])
        };
        rows.push(RateRow { report: *r, rates });
    }
    Ok(RateTable { axis, rows })
}

/// Scientific notation with four significant digits and a signed two-digit
/// exponent, e.g. `4.800e-01`.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.3e}");
    let (mant, exp) = s.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

impl RateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cells,h_max,dt,e_u_E,r_E,e_u_L2,r_u,e_p_L2,r_p\n");
        for row in &self.rows {
            let r = &row.report;
            let rate = |i: usize| row.rates.map(|v| format!("{:.2}", v[i])).unwrap_or_default();
            let dt = r.dt.map(format_sci).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.cells,
                format_sci(r.h_max),
                dt,
                format_sci(r.e_u_energy),
                rate(0),
                format_sci(r.e_u_l2),
                rate(1),
                format_sci(r.e_p_l2),
                rate(2)
            );
        }
        out
    }

    pub fn last_rates(&self) -> Option<[f64; 3]> {
        self.rows.last().and_then(|r| r.rates)
    }
}

/// Maxima of the conservation checks, relative to `velocity_scale` (the
/// largest discrete velocity magnitude at quadrature points).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    /// Elementwise divergence in the free-flow region.
    pub divergence_s: f64,
    /// Elementwise `div u + Pi f^d` in the porous region.
    pub divergence_d: f64,
    /// Normal-component jump across interior facets of either region.
    pub normal_jump: f64,
    /// `(u - ubar) . n` on the interface, both sides (porous side corrected
    /// by the projected mass mismatch).
    pub interface_mismatch: f64,
    /// Porous-region flux balance relative to the total boundary flux.
    pub flux_balance: f64,
    pub velocity_scale: f64,
}

impl ConservationReport {
    pub fn max_pointwise(&self) -> f64 {
        self.divergence_s
            .max(self.divergence_d)
            .max(self.normal_jump)
            .max(self.interface_mismatch)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_pointwise() <= tol && self.flux_balance <= tol
    }
}

struct CellField<'a> {
    mesh: &'a Mesh,
    dofs: &'a DofSystem,
    re: &'a ReferenceElement,
    coeffs: &'a [f64],
}

impl CellField<'_> {
    fn velocity(&self, c: usize, x: [f64; 2]) -> [f64; 2] {
        crate::spaces::cell_velocity_at(self.mesh, self.dofs, self.re, self.coeffs, c, x)
    }

    fn facet_velocity(&self, f: usize, s: f64) -> [f64; 2] {
        let nt = self.dofs.nt;
        let o = self.dofs.facet_velocity(f).expect("facet carries a velocity trace");
        let p = [s, 0.0];
        [
            self.re.trace.expand_at(&self.coeffs[o..o + nt], p),
            self.re.trace.expand_at(&self.coeffs[o + nt..o + 2 * nt], p),
        ]
    }
}

/// Checks that the discrete velocity is H(div)-conforming, divergence free
/// in the free-flow region, and balances the porous source.
pub fn conservation_report(
    mesh: &Mesh,
    dofs: &DofSystem,
    re: &ReferenceElement,
    data: &dyn FlowData,
    coeffs: &[f64],
    t: f64,
) -> Result<ConservationReport> {
    let field = CellField { mesh, dofs, re, coeffs };
    let (nv, np) = (re.nv(), re.np());
    let qdeg = crate::femlib::cell_quadrature_degree(dofs.k);

    // (max |u|, max |div|_s, max |div + Pi f|_d, integral of f^d)
    let cell_parts: Vec<Result<[f64; 4]>> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let map = mesh.cell_map(c);
            let sub = mesh.cells[c].subdomain;
            let ou = dofs.cell_velocity(c);
            let proj = match sub {
                Subdomain::Darcy => Some(l2_project_cell(mesh, c, &re.pressure, qdeg, |x| data.forcing_d(x, t))?),
                Subdomain::Stokes => None,
            };
            let mut out = [0.0f64; 4];
            for (q, w) in re.cell_rule.weights.iter().enumerate() {
                let phi = &re.vel_vals[q * nv..(q + 1) * nv];
                let mut u = [0.0; 2];
                let mut div = 0.0;
                for i in 0..nv {
                    let g = map.push_gradient(re.vel_grads[q * nv + i]);
                    u[0] += coeffs[ou + i] * phi[i];
                    u[1] += coeffs[ou + nv + i] * phi[i];
                    div += coeffs[ou + i] * g[0] + coeffs[ou + nv + i] * g[1];
                }
                out[0] = out[0].max(u[0].hypot(u[1]));
                match &proj {
                    None => out[1] = out[1].max(div.abs()),
                    Some(p) => {
                        let pf: f64 = (0..np).map(|l| p[l] * re.pres_vals[q * np + l]).sum();
                        out[2] = out[2].max((div + pf).abs());
                        out[3] += w * map.det * data.forcing_d(map.map(re.cell_rule.points[q]), t);
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut scale = 0.0f64;
    let mut div_s = 0.0f64;
    let mut div_d = 0.0f64;
    let mut source_d = 0.0;
    for p in cell_parts {
        let p = p?;
        scale = scale.max(p[0]);
        div_s = div_s.max(p[1]);
        div_d = div_d.max(p[2]);
        source_d += p[3];
    }

    let mut jump = 0.0f64;
    let mut mismatch = 0.0f64;
    // signed porous boundary flux and its absolute size
    let mut flux = 0.0;
    let mut flux_abs = 0.0;
    let mut porous_boundary = 0.0;
    let edge_rule = &re.edge_rule;
    for (f, facet) in mesh.facets.iter().enumerate() {
        let geo = mesh.facet_geometry(f);
        let (owner, _) = facet.owner;
        match facet.tag {
            FacetTag::InteriorS | FacetTag::InteriorD => {
                let (nb, _) = facet.neighbor.expect("interior facet has two sides");
                for s in &edge_rule.points {
                    let x = mesh.facet_point(f, s[0]);
                    let a = field.velocity(owner, x);
                    let b = field.velocity(nb, x);
                    jump = jump.max(((a[0] - b[0]) * geo.normal[0] + (a[1] - b[1]) * geo.normal[1]).abs());
                }
            }
            FacetTag::Interface => {
                let (nb, _) = facet.neighbor.expect("interface facet has two sides");
                let n = geo.normal;
                porous_boundary += geo.length;
                let mproj = l2_project_facet(mesh, f, &re.trace, facet_quadrature_degree(dofs.k), |x| {
                    data.interface_mass(x, n, t)
                })?;
                for (s, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                    let x = mesh.facet_point(f, s[0]);
                    let us = field.velocity(owner, x);
                    let ud = field.velocity(nb, x);
                    let ub = field.facet_velocity(f, s[0]);
                    let m = re.trace.expand_at(&mproj, [s[0], 0.0]);
                    let dn = |a: [f64; 2]| (a[0] - ub[0]) * n[0] + (a[1] - ub[1]) * n[1];
                    mismatch = mismatch.max(dn(us).abs()).max((dn(ud) + m).abs());
                    let un = ud[0] * n[0] + ud[1] * n[1];
                    flux += w * geo.length * un;
                    flux_abs += w * geo.length * un.abs();
                }
            }
            FacetTag::GammaDD | FacetTag::GammaDN => {
                porous_boundary += geo.length;
                for (s, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                    let x = mesh.facet_point(f, s[0]);
                    let u = field.velocity(owner, x);
                    let un = u[0] * geo.normal[0] + u[1] * geo.normal[1];
                    flux -= w * geo.length * un;
                    flux_abs += w * geo.length * un.abs();
                }
            }
            _ => {}
        }
    }
    let balance = (flux - source_d).abs();
    let vs = if scale > 0.0 { scale } else { 1.0 };
    // A vanishing porous flow must not turn rounding into an O(1) defect.
    let fs = (flux_abs + source_d.abs()).max(scale * porous_boundary);
    let fs = if fs > 0.0 { fs } else { 1.0 };
    Ok(ConservationReport {
        divergence_s: div_s / vs,
        divergence_d: div_d / vs,
        normal_jump: jump / vs,
        interface_mismatch: mismatch / vs,
        flux_balance: balance / fs,
        velocity_scale: scale,
    })
}

/// Local matrices of the discrete norms; each squared norm is a sum of
/// `x_K^T M_K x_K` over its blocks.
#[derive(Debug, Clone)]
pub struct NormBlocks {
    /// Free-flow part of the velocity norm.
    pub velocity_s: Vec<LocalBlock>,
    /// Porous part: `H(div)` norm, normal jumps, interface normal mismatch.
    pub velocity_d: Vec<LocalBlock>,
    /// Tangential trace on the interface.
    pub velocity_interface: Vec<LocalBlock>,
    /// `h_K^2 |v|_{2,K}^2` on free-flow cells.
    pub velocity_hessian: Vec<LocalBlock>,
    pub pressure_s: Vec<LocalBlock>,
    pub pressure_d: Vec<LocalBlock>,
    /// Broken gradient plus facet jumps of the porous cell pressure.
    pub pressure_broken_h1_d: Vec<LocalBlock>,
    /// Broken gradient plus `h_K^{-1} ||q - qbar||^2` in the porous region.
    pub pressure_hdg_h1_d: Vec<LocalBlock>,
}

/// Basis values and physical gradients of a cell basis at a physical point.
fn cell_tabulate(mesh: &Mesh, c: usize, basis: &crate::femlib::Basis, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let map = mesh.cell_map(c);
    let xi = map.inverse(x);
    let n = basis.dim();
    let mut v = vec![0.0; n];
    let mut g = vec![[0.0; 2]; n];
    basis.values_at(xi, &mut v);
    basis.ref_gradients_at(xi, &mut g);
    for gi in g.iter_mut() {
        *gi = map.push_gradient(*gi);
    }
    (v, g)
}

impl NormBlocks {
    pub fn new(mesh: &Mesh, dofs: &DofSystem, re: &ReferenceElement) -> Result<Self> {
        dofs.check_mesh(mesh)?;
        let (nv, np, nt) = (re.nv(), re.np(), re.nt());
        let mut out = NormBlocks {
            velocity_s: Vec::new(),
            velocity_d: Vec::new(),
            velocity_interface: Vec::new(),
            velocity_hessian: Vec::new(),
            pressure_s: Vec::new(),
            pressure_d: Vec::new(),
            pressure_broken_h1_d: Vec::new(),
            pressure_hdg_h1_d: Vec::new(),
        };
        let range = |o: usize, n: usize| o..o + n;

        for c in 0..mesh.num_cells() {
            let cell = &mesh.cells[c];
            let map = mesh.cell_map(c);
            let h = mesh.h_cell[c];
            let ou = dofs.cell_velocity(c);
            let op = dofs.cell_pressure(c);
            let trace_of = |f: usize| match cell.subdomain {
                Subdomain::Stokes => dofs.facet_pressure_s(f),
                Subdomain::Darcy => dofs.facet_pressure_d(f),
            };

            // pressure: ||q||^2 + h sum ||qbar||^2 and the hdg H1 form
            let mut pdofs: Vec<usize> = range(op, np).collect();
            for f in cell.facets {
                pdofs.extend(range(trace_of(f).expect("pressure trace"), nt));
            }
            let mut pm = LocalBlock::zeros(pdofs.clone());
            let mut ph = LocalBlock::zeros(pdofs);
            for (q, w) in re.cell_rule.weights.iter().enumerate() {
                let wq = w * map.det;
                for l in 0..np {
                    let gl = map.push_gradient(re.pres_grads[q * np + l]);
                    for m in 0..np {
                        let gm = map.push_gradient(re.pres_grads[q * np + m]);
                        pm.add(l, m, wq * re.pres_vals[q * np + l] * re.pres_vals[q * np + m]);
                        ph.add(l, m, wq * (gl[0] * gm[0] + gl[1] * gm[1]));
                    }
                }
            }
            for e in 0..3 {
                let (_, len) = mesh.local_facet_normal(c, e);
                let aligned = cell.aligned[e];
                let t0 = np + e * nt;
                for (q, w) in re.edge_rule.weights.iter().enumerate() {
                    let wq = w * len;
                    let tr = re.trace_at(q, aligned);
                    let ps = &re.edge_pres_vals[e][q * np..(q + 1) * np];
                    for a in 0..nt {
                        for b in 0..nt {
                            pm.add(t0 + a, t0 + b, h * wq * tr[a] * tr[b]);
                        }
                    }
                    // h^{-1} ||q - qbar||^2 with jump vector [psi, -tr]
                    let mut vals = vec![0.0; np + 3 * nt];
                    vals[..np].copy_from_slice(ps);
                    for a in 0..nt {
                        vals[t0 + a] = -tr[a];
                    }
                    for i in 0..vals.len() {
                        if vals[i] == 0.0 {
                            continue;
                        }
                        for j in 0..vals.len() {
                            if vals[j] != 0.0 {
                                ph.add(i, j, wq / h * vals[i] * vals[j]);
                            }
                        }
                    }
                }
            }
            match cell.subdomain {
                Subdomain::Stokes => out.pressure_s.push(pm),
                Subdomain::Darcy => {
                    out.pressure_d.push(pm);
                    out.pressure_hdg_h1_d.push(ph);
                }
            }

            match cell.subdomain {
                Subdomain::Stokes => {
                    let mut vdofs: Vec<usize> = range(ou, 2 * nv).collect();
                    for f in cell.facets {
                        vdofs.extend(range(dofs.facet_velocity(f).expect("velocity trace"), 2 * nt));
                    }
                    let mut vb = LocalBlock::zeros(vdofs);
                    let mut hb = LocalBlock::zeros(range(ou, 2 * nv).collect());
                    for (q, w) in re.cell_rule.weights.iter().enumerate() {
                        let wq = w * map.det;
                        for i in 0..nv {
                            let gi = map.push_gradient(re.vel_grads[q * nv + i]);
                            let hi = map.push_hessian(re.vel_hessians[q * nv + i]);
                            for j in 0..nv {
                                let gj = map.push_gradient(re.vel_grads[q * nv + j]);
                                let hj = map.push_hessian(re.vel_hessians[q * nv + j]);
                                let gg = wq * (gi[0] * gj[0] + gi[1] * gj[1]);
                                let hh = wq * h * h * (hi[0] * hj[0] + 2.0 * hi[1] * hj[1] + hi[2] * hj[2]);
                                for a in 0..2 {
                                    vb.add(a * nv + i, a * nv + j, gg);
                                    hb.add(a * nv + i, a * nv + j, hh);
                                }
                            }
                        }
                    }
                    for e in 0..3 {
                        let (_, len) = mesh.local_facet_normal(c, e);
                        let aligned = cell.aligned[e];
                        let t0 = 2 * nv + e * 2 * nt;
                        for (q, w) in re.edge_rule.weights.iter().enumerate() {
                            let s = w * len / h;
                            let phi = &re.edge_vel_vals[e][q * nv..(q + 1) * nv];
                            let tr = re.trace_at(q, aligned);
                            let mut vals = vec![0.0; nv + nt];
                            vals[..nv].copy_from_slice(phi);
                            for m in 0..nt {
                                vals[nv + m] = -tr[m];
                            }
                            let idx = |a: usize, i: usize| if i < nv { a * nv + i } else { t0 + a * nt + (i - nv) };
                            for a in 0..2 {
                                for i in 0..nv + nt {
                                    for j in 0..nv + nt {
                                        vb.add(idx(a, i), idx(a, j), s * vals[i] * vals[j]);
                                    }
                                }
                            }
                        }
                    }
                    out.velocity_s.push(vb);
                    out.velocity_hessian.push(hb);
                }
                Subdomain::Darcy => {
                    let mut vb = LocalBlock::zeros(range(ou, 2 * nv).collect());
                    for (q, w) in re.cell_rule.weights.iter().enumerate() {
                        let wq = w * map.det;
                        let phi = &re.vel_vals[q * nv..(q + 1) * nv];
                        for i in 0..nv {
                            let gi = map.push_gradient(re.vel_grads[q * nv + i]);
                            for j in 0..nv {
                                let gj = map.push_gradient(re.vel_grads[q * nv + j]);
                                for a in 0..2 {
                                    vb.add(a * nv + i, a * nv + j, wq * phi[i] * phi[j]);
                                    for b in 0..2 {
                                        vb.add(a * nv + i, b * nv + j, wq * gi[a] * gj[b]);
                                    }
                                }
                            }
                        }
                    }
                    out.velocity_d.push(vb);
                    let mut gb = LocalBlock::zeros(range(op, np).collect());
                    for (q, w) in re.cell_rule.weights.iter().enumerate() {
                        let wq = w * map.det;
                        for l in 0..np {
                            let gl = map.push_gradient(re.pres_grads[q * np + l]);
                            for m in 0..np {
                                let gm = map.push_gradient(re.pres_grads[q * np + m]);
                                gb.add(l, m, wq * (gl[0] * gm[0] + gl[1] * gm[1]));
                            }
                        }
                    }
                    out.pressure_broken_h1_d.push(gb);
                }
            }
        }

        // facet terms needing both sides
        for (f, facet) in mesh.facets.iter().enumerate() {
            let geo = mesh.facet_geometry(f);
            let n = geo.normal;
            let hf = geo.length;
            let (owner, _) = facet.owner;
            match facet.tag {
                FacetTag::InteriorD | FacetTag::GammaDN | FacetTag::GammaDD => {
                    let nb = facet.neighbor.map(|(c, _)| c);
                    // normal jump of the velocity on interior and flux-data facets
                    if facet.tag != FacetTag::GammaDD {
                        let mut vdofs: Vec<usize> = range(dofs.cell_velocity(owner), 2 * nv).collect();
                        if let Some(nb) = nb {
                            vdofs.extend(range(dofs.cell_velocity(nb), 2 * nv));
                        }
                        let mut jb = LocalBlock::zeros(vdofs);
                        for (s, w) in re.edge_rule.points.iter().zip(&re.edge_rule.weights) {
                            let x = mesh.facet_point(f, s[0]);
                            let mut vals = Vec::with_capacity(4 * nv);
                            let (po, _) = cell_tabulate(mesh, owner, &re.velocity, x);
                            vals.extend(po.iter().map(|v| v * n[0]));
                            vals.extend(po.iter().map(|v| v * n[1]));
                            if let Some(nb) = nb {
                                let (pn, _) = cell_tabulate(mesh, nb, &re.velocity, x);
                                vals.extend(pn.iter().map(|v| -v * n[0]));
                                vals.extend(pn.iter().map(|v| -v * n[1]));
                            }
                            for i in 0..vals.len() {
                                for j in 0..vals.len() {
                                    jb.add(i, j, w * vals[i] * vals[j]);
                                }
                            }
                        }
                        out.velocity_d.push(jb);
                    }
                    // jump of the cell pressure on interior and pressure-data facets
                    if facet.tag != FacetTag::GammaDN {
                        let mut pdofs: Vec<usize> = range(dofs.cell_pressure(owner), np).collect();
                        if let Some(nb) = nb {
                            pdofs.extend(range(dofs.cell_pressure(nb), np));
                        }
                        let mut jb = LocalBlock::zeros(pdofs);
                        for (s, w) in re.edge_rule.points.iter().zip(&re.edge_rule.weights) {
                            let x = mesh.facet_point(f, s[0]);
                            let (mut vals, _) = cell_tabulate(mesh, owner, &re.pressure, x);
                            if let Some(nb) = nb {
                                let (pn, _) = cell_tabulate(mesh, nb, &re.pressure, x);
                                vals.extend(pn.iter().map(|v| -v));
                            }
                            for i in 0..vals.len() {
                                for j in 0..vals.len() {
                                    jb.add(i, j, w * vals[i] * vals[j]);
                                }
                            }
                        }
                        out.pressure_broken_h1_d.push(jb);
                    }
                }
                FacetTag::Interface => {
                    let (dc, _) = facet.neighbor.expect("interface facet has two sides");
                    let ob = dofs.facet_velocity(f).expect("interface trace");
                    let mut tb = LocalBlock::zeros(range(ob, 2 * nt).collect());
                    let mut vdofs: Vec<usize> = range(dofs.cell_velocity(dc), 2 * nv).collect();
                    vdofs.extend(range(ob, 2 * nt));
                    let mut mb = LocalBlock::zeros(vdofs);
                    let hk = mesh.h_cell[dc];
                    for (q, (s, w)) in re.edge_rule.points.iter().zip(&re.edge_rule.weights).enumerate() {
                        let wq = w * hf;
                        let tr = re.trace_at(q, true);
                        for a in 0..2 {
                            for b in 0..2 {
                                let proj = if a == b { 1.0 } else { 0.0 } - n[a] * n[b];
                                for m in 0..nt {
                                    for l in 0..nt {
                                        tb.add(a * nt + m, b * nt + l, wq * proj * tr[m] * tr[l]);
                                    }
                                }
                            }
                        }
                        let x = mesh.facet_point(f, s[0]);
                        let (pd, _) = cell_tabulate(mesh, dc, &re.velocity, x);
                        let mut vals = Vec::with_capacity(2 * nv + 2 * nt);
                        vals.extend(pd.iter().map(|v| v * n[0]));
                        vals.extend(pd.iter().map(|v| v * n[1]));
                        vals.extend(tr.iter().map(|v| -v * n[0]));
                        vals.extend(tr.iter().map(|v| -v * n[1]));
                        for i in 0..vals.len() {
                            for j in 0..vals.len() {
                                mb.add(i, j, wq / hk * vals[i] * vals[j]);
                            }
                        }
                    }
                    out.velocity_interface.push(tb);
                    out.velocity_d.push(mb);
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn velocity(&self) -> impl Iterator<Item = &LocalBlock> {
        self.velocity_s.iter().chain(&self.velocity_d).chain(&self.velocity_interface)
    }

    pub fn pressure(&self) -> impl Iterator<Item = &LocalBlock> {
        self.pressure_s.iter().chain(&self.pressure_d)
    }
}

fn quadratic_sum<'a>(blocks: impl IntoIterator<Item = &'a LocalBlock>, coeffs: &[f64]) -> f64 {
    blocks
        .into_iter()
        .map(|b| {
            let x = b.gather(coeffs);
            b.apply(&x).iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
        })
        .sum()
}

/// Values of the discrete norms of one coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleNorms {
    pub v: f64,
    pub v_s: f64,
    pub v_d: f64,
    pub v_interface_tangential: f64,
    pub v_prime: f64,
    pub p: f64,
    pub p_s: f64,
    pub p_d: f64,
    pub p_broken_h1_d: f64,
    pub p_hdg_h1_d: f64,
}

pub fn triple_norms(blocks: &NormBlocks, coeffs: &[f64]) -> TripleNorms {
    let q = |b: &Vec<LocalBlock>| quadratic_sum(b, coeffs).max(0.0);
    let (vs, vd, vi, vh) = (q(&blocks.velocity_s), q(&blocks.velocity_d), q(&blocks.velocity_interface), q(&blocks.velocity_hessian));
    let (ps, pd) = (q(&blocks.pressure_s), q(&blocks.pressure_d));
    TripleNorms {
        v: (vs + vd + vi).sqrt(),
        v_s: vs.sqrt(),
        v_d: vd.sqrt(),
        v_interface_tangential: vi.sqrt(),
        v_prime: (vs + vd + vi + vh).sqrt(),
        p: (ps + pd).sqrt(),
        p_s: ps.sqrt(),
        p_d: pd.sqrt(),
        p_broken_h1_d: q(&blocks.pressure_broken_h1_d).sqrt(),
        p_hdg_h1_d: q(&blocks.pressure_hdg_h1_d).sqrt(),
    }
}

/// `||p_h^d||_{Omega^d} / ||mu kappa^{-1} u_h^d||_{Omega^d}`, or `None` when
/// the porous velocity vanishes.
pub fn pressure_velocity_ratio(mesh: &Mesh, dofs: &DofSystem, re: &ReferenceElement, params: &PhysicalParams, coeffs: &[f64]) -> Option<f64> {
    let (nv, np) = (re.nv(), re.np());
    let mut num = 0.0;
    let mut den = 0.0;
    for c in mesh.cells_in(Subdomain::Darcy) {
        let map = mesh.cell_map(c);
        let r = params.mu / params.kappa_at(c);
        let ou = dofs.cell_velocity(c);
        let op = dofs.cell_pressure(c);
        for (q, w) in re.cell_rule.weights.iter().enumerate() {
            let wq = w * map.det;
            let phi = &re.vel_vals[q * nv..(q + 1) * nv];
            let u: [f64; 2] = [0, 1].map(|a| (0..nv).map(|i| coeffs[ou + a * nv + i] * phi[i]).sum());
            let p: f64 = (0..np).map(|l| coeffs[op + l] * re.pres_vals[q * np + l]).sum();
            num += wq * p * p;
            den += wq * r * r * (u[0] * u[0] + u[1] * u[1]);
        }
    }
    (den > 0.0).then(|| (num / den).sqrt())
}

/// Full coefficient vector of the projections of an exact solution: `L^2`
/// projections on cells and facets (velocity traces from the free-flow
/// field, pressure traces from the pressure of the adjacent region).
pub fn interpolate_exact(mesh: &Mesh, dofs: &DofSystem, re: &ReferenceElement, exact: &dyn ExactSolution, t: f64) -> Result<Vec<f64>> {
    let k = dofs.k;
    let cdeg = error_quadrature_degree(k);
    let fdeg = (facet_quadrature_degree(k) + 2).min(crate::femlib::quadrature::MAX_QUADRATURE_DEGREE);
    // Touch the rules once so an unsupported degree fails early.
    quadrature(QuadratureDomain::Triangle, cdeg)?;
    let mut out = vec![0.0; dofs.n_total];
    for c in 0..mesh.num_cells() {
        let sub = mesh.cells[c].subdomain;
        let ou = dofs.cell_velocity(c);
        for a in 0..2 {
            let v = l2_project_cell(mesh, c, &re.velocity, cdeg, |x| exact.velocity(sub, x, t)[a])?;
            out[ou + a * dofs.nv..ou + (a + 1) * dofs.nv].copy_from_slice(&v);
        }
        let op = dofs.cell_pressure(c);
        let p = l2_project_cell(mesh, c, &re.pressure, cdeg, |x| exact.pressure(sub, x, t))?;
        out[op..op + dofs.np].copy_from_slice(&p);
    }
    for f in 0..mesh.num_facets() {
        if let Some(o) = dofs.facet_velocity(f) {
            let v = l2_project_facet_vector(mesh, f, &re.trace, fdeg, |x| exact.velocity_s(x, t))?;
            out[o..o + v.len()].copy_from_slice(&v);
        }
        if let Some(o) = dofs.facet_pressure_s(f) {
            let v = l2_project_facet(mesh, f, &re.trace, fdeg, |x| exact.pressure_s(x, t))?;
            out[o..o + v.len()].copy_from_slice(&v);
        }
        if let Some(o) = dofs.facet_pressure_d(f) {
            let v = l2_project_facet(mesh, f, &re.trace, fdeg, |x| exact.pressure_d(x, t))?;
            out[o..o + v.len()].copy_from_slice(&v);
        }
    }
    Ok(out)
}

/// Euclidean norm of the residual of the stationary system at time `t`
/// evaluated at the projected exact solution, over free unknowns.
pub fn consistency_residual(asm: &Assembler, exact: &dyn ExactSolution, t: f64) -> Result<f64> {
    let ctx = &asm.ctx;
    let x_full = interpolate_exact(ctx.mesh, ctx.dofs, ctx.re, exact, t)?;
    let cv = crate::solver::constrained_values(ctx.mesh, ctx.dofs, ctx.re, ctx.data, t)?;
    let sys = asm.assemble(&StepInput::stationary(t), &cv);
    let x: Vec<f64> = (0..ctx.dofs.n_total)
        .filter(|&g| ctx.dofs.free(g).is_some())
        .map(|g| x_full[g])
        .collect();
    let r = sys.apply(&x);
    Ok(r.iter().zip(&sys.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

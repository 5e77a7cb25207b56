//! Element and facet matrices of the discrete forms and the load vectors.
//!
//! Local unknown order per element:
//! - free-flow cell: `[u (2 nv), ubar_e (2 nt) x 3, p (np), pbar^s_e (nt) x 3]`
//! - porous cell: `[u (2 nv), p (np), pbar^d_e (nt) x 3]`
//! - interface facet: `[ubar (2 nt), pbar^d (nt)]`
//!
//! Velocity-pressure couplings are stored in both the pressure rows and the
//! velocity rows, so each local matrix is the full saddle-point block.

use crate::error::{HdgError, Result};
use crate::femlib::ReferenceElement;
use crate::mesh::{FacetTag, Mesh, Subdomain};
use crate::scenarios::FlowData;
use crate::spaces::DofSystem;

#[derive(Debug, Clone, PartialEq)]
pub enum Permeability {
    Constant(f64),
    /// Indexed by global cell number; only porous cells are read.
    PerCell(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: Permeability,
}

impl PhysicalParams {
    /// Constant permeability with the default penalty `8 k^2`.
    pub fn new(mu: f64, kappa: f64, alpha: f64, k: usize) -> Self {
        Self {
            mu,
            alpha,
            beta: 8.0 * (k * k) as f64,
            kappa: Permeability::Constant(kappa),
        }
    }

    pub fn kappa_at(&self, cell: usize) -> f64 {
        match &self.kappa {
            Permeability::Constant(v) => *v,
            Permeability::PerCell(v) => v[cell],
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.mu) || !pos(self.alpha) || !pos(self.beta) {
            return Err(HdgError::InvalidParameter(format!(
                "mu, alpha and beta must be positive (got {}, {}, {})",
                self.mu, self.alpha, self.beta
            )));
        }
        match &self.kappa {
            Permeability::Constant(v) if !pos(*v) => {
                return Err(HdgError::InvalidParameter(format!("kappa must be positive (got {v})")))
            }
            Permeability::PerCell(v) => {
                if v.len() != mesh.num_cells() {
                    return Err(HdgError::InvalidParameter("permeability table does not match the mesh".into()));
                }
                for c in mesh.cells_in(Subdomain::Darcy) {
                    if !pos(v[c]) {
                        return Err(HdgError::InvalidParameter(format!("kappa on cell {c} is {}", v[c])));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Which forms an element computation includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    /// `(u, v) / dt` in the free-flow region and the matching history load.
    pub mass: bool,
    /// Free-flow viscous form with interior penalty.
    pub viscous: bool,
    /// Darcy resistance.
    pub darcy: bool,
    /// Slip-law term on the interface.
    pub slip: bool,
    /// Lagged convection.
    pub convection: bool,
    /// Velocity-pressure coupling and its transpose.
    pub coupling: bool,
    /// Sources, boundary data and interface data.
    pub load: bool,
}

impl Terms {
    pub const NONE: Terms = Terms {
        mass: false,
        viscous: false,
        darcy: false,
        slip: false,
        convection: false,
        coupling: false,
        load: false,
    };
    /// One backward Euler step.
    pub const TRANSIENT: Terms = Terms {
        mass: true,
        viscous: true,
        darcy: true,
        slip: true,
        convection: true,
        coupling: true,
        load: true,
    };
    /// Stationary Stokes-Darcy problem.
    pub const STATIONARY: Terms = Terms {
        mass: false,
        convection: false,
        ..Terms::TRANSIENT
    };
    /// The linear velocity form only.
    pub const LINEAR_VELOCITY: Terms = Terms {
        viscous: true,
        darcy: true,
        slip: true,
        ..Terms::NONE
    };
    pub const COUPLING: Terms = Terms {
        coupling: true,
        ..Terms::NONE
    };
}

/// Everything that varies between assemblies of the same discretization.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub terms: Terms,
    /// Time at which data are evaluated (`t^{n+1}` for a step).
    pub time: f64,
    pub dt: f64,
    /// Previous state: convecting velocity and history term.
    pub previous: Option<&'a [f64]>,
    /// Use the stationary momentum source.
    pub stationary: bool,
}

impl<'a> StepInput<'a> {
    pub fn step(time: f64, dt: f64, previous: &'a [f64]) -> Self {
        Self {
            terms: Terms::TRANSIENT,
            time,
            dt,
            previous: Some(previous),
            stationary: false,
        }
    }

    pub fn stationary(time: f64) -> Self {
        Self {
            terms: Terms::STATIONARY,
            time,
            dt: 1.0,
            previous: None,
            stationary: true,
        }
    }

    pub fn only(terms: Terms) -> Self {
        Self {
            terms,
            time: 0.0,
            dt: 1.0,
            previous: None,
            stationary: false,
        }
    }
}

/// Dense local matrix (row-major) and load with their global unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBlock {
    pub dofs: Vec<usize>,
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LocalBlock {
    pub fn zeros(dofs: Vec<usize>) -> Self {
        let n = dofs.len();
        Self {
            dofs,
            matrix: vec![0.0; n * n],
            rhs: vec![0.0; n],
        }
    }

    pub fn size(&self) -> usize {
        self.dofs.len()
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let n = self.dofs.len();
        self.matrix[i * n + j] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dofs.len() + j]
    }

    /// `matrix * x` for a local coefficient vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..n)
            .map(|i| self.matrix[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Gather the local coefficients of a global vector.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&d| global[d]).collect()
    }
}

/// Read-only discretization data shared by all element computations.
#[derive(Clone, Copy)]
pub struct FormContext<'a> {
    pub mesh: &'a Mesh,
    pub dofs: &'a DofSystem,
    pub re: &'a ReferenceElement,
    pub params: &'a PhysicalParams,
    pub data: &'a dyn FlowData,
}

/// Kinds of local element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    StokesCell(usize),
    DarcyCell(usize),
    InterfaceFacet(usize),
}

impl Element {
    /// All elements of a mesh, free-flow cells first.
    pub fn all(mesh: &Mesh) -> Vec<Element> {
        let mut out: Vec<Element> = mesh.cells_in(Subdomain::Stokes).map(Element::StokesCell).collect();
        out.extend(mesh.cells_in(Subdomain::Darcy).map(Element::DarcyCell));
        out.extend(
            mesh.facets
                .iter()
                .enumerate()
                .filter(|(_, f)| f.tag == FacetTag::Interface)
                .map(|(i, _)| Element::InterfaceFacet(i)),
        );
        out
    }
}

impl<'a> FormContext<'a> {
    /// Global unknowns of an element in local order.
    pub fn element_dofs(&self, el: Element) -> Vec<usize> {
        let d = self.dofs;
        let (nv, np, nt) = (d.nv, d.np, d.nt);
        let mut out = Vec::new();
        match el {
            Element::StokesCell(c) => {
                let cell = &self.mesh.cells[c];
                out.extend(d.cell_velocity(c)..d.cell_velocity(c) + 2 * nv);
                for f in cell.facets {
                    let o = d.facet_velocity(f).expect("free-flow facet carries a velocity trace");
                    out.extend(o..o + 2 * nt);
                }
                out.extend(d.cell_pressure(c)..d.cell_pressure(c) + np);
                for f in cell.facets {
                    let o = d.facet_pressure_s(f).expect("free-flow facet carries a pressure trace");
                    out.extend(o..o + nt);
                }
            }
            Element::DarcyCell(c) => {
                let cell = &self.mesh.cells[c];
                out.extend(d.cell_velocity(c)..d.cell_velocity(c) + 2 * nv);
                out.extend(d.cell_pressure(c)..d.cell_pressure(c) + np);
                for f in cell.facets {
                    let o = d.facet_pressure_d(f).expect("porous facet carries a pressure trace");
                    out.extend(o..o + nt);
                }
            }
            Element::InterfaceFacet(f) => {
                let o = d.facet_velocity(f).expect("interface carries a velocity trace");
                out.extend(o..o + 2 * nt);
                let o = d.facet_pressure_d(f).expect("interface carries a porous pressure trace");
                out.extend(o..o + nt);
            }
        }
        out
    }

    pub fn element(&self, el: Element, input: &StepInput) -> LocalBlock {
        match el {
            Element::StokesCell(c) => self.stokes_cell(c, input),
            Element::DarcyCell(c) => self.darcy_cell(c, input),
            Element::InterfaceFacet(f) => self.interface_facet(f, input),
        }
    }

    /// Lagged velocity of cell `c` at reference point values `phi`.
    fn velocity_from(&self, coeffs: &[f64], c: usize, phi: &[f64]) -> [f64; 2] {
        let nv = self.dofs.nv;
        let o = self.dofs.cell_velocity(c);
        let mut w = [0.0; 2];
        for i in 0..nv {
            w[0] += coeffs[o + i] * phi[i];
            w[1] += coeffs[o + nv + i] * phi[i];
        }
        w
    }

    fn stokes_cell(&self, c: usize, input: &StepInput) -> LocalBlock {
        let (mesh, re, prm) = (self.mesh, self.re, self.params);
        let terms = input.terms;
        let (nv, np, nt) = (re.nv(), re.np(), re.nt());
        let mut blk = LocalBlock::zeros(self.element_dofs(Element::StokesCell(c)));
        let nvel_cell = 2 * nv;
        let ubar0 = nvel_cell;
        let p0 = nvel_cell + 6 * nt;
        let pbar0 = p0 + np;
        let map = mesh.cell_map(c);
        let h = mesh.h_cell[c];
        let mu = prm.mu;
        let lagged = if terms.convection { input.previous } else { None };

        let mut grads = vec![[0.0; 2]; nv];
        for (q, w) in re.cell_rule.weights.iter().enumerate() {
            let wq = w * map.det;
            let phi = &re.vel_vals[q * nv..(q + 1) * nv];
            for i in 0..nv {
                grads[i] = map.push_gradient(re.vel_grads[q * nv + i]);
            }
            let psi = &re.pres_vals[q * np..(q + 1) * np];
            if terms.mass {
                let s = wq / input.dt;
                for i in 0..nv {
                    for j in 0..nv {
                        let v = s * phi[i] * phi[j];
                        blk.add(i, j, v);
                        blk.add(nv + i, nv + j, v);
                    }
                }
            }
            if terms.viscous {
                for a in 0..2 {
                    for i in 0..nv {
                        let gi = grads[i];
                        for b in 0..2 {
                            for j in 0..nv {
                                let gj = grads[j];
                                let mut v = gj[a] * gi[b];
                                if a == b {
                                    v += gi[0] * gj[0] + gi[1] * gj[1];
                                }
                                blk.add(a * nv + i, b * nv + j, wq * mu * v);
                            }
                        }
                    }
                }
            }
            if let Some(prev) = lagged {
                let wv = self.velocity_from(prev, c, phi);
                for i in 0..nv {
                    let wg = wv[0] * grads[i][0] + wv[1] * grads[i][1];
                    for j in 0..nv {
                        let v = -wq * phi[j] * wg;
                        blk.add(i, j, v);
                        blk.add(nv + i, nv + j, v);
                    }
                }
            }
            if terms.coupling {
                for l in 0..np {
                    for a in 0..2 {
                        for i in 0..nv {
                            let v = -wq * psi[l] * grads[i][a];
                            blk.add(p0 + l, a * nv + i, v);
                            blk.add(a * nv + i, p0 + l, v);
                        }
                    }
                }
            }
            if terms.load || (terms.mass && input.previous.is_some()) {
                let x = map.map(re.cell_rule.points[q]);
                let mut f = [0.0; 2];
                if terms.load {
                    f = if input.stationary {
                        self.data.forcing_s_stationary(x, input.time)
                    } else {
                        self.data.forcing_s(x, input.time)
                    };
                }
                if terms.mass {
                    if let Some(prev) = input.previous {
                        let un = self.velocity_from(prev, c, phi);
                        f[0] += un[0] / input.dt;
                        f[1] += un[1] / input.dt;
                    }
                }
                for i in 0..nv {
                    blk.rhs[i] += wq * f[0] * phi[i];
                    blk.rhs[nv + i] += wq * f[1] * phi[i];
                }
            }
        }

        // facet terms
        let nloc = nvel_cell + 2 * nt;
        let mut jump = vec![[0.0; 2]; nloc];
        let mut flux = vec![[0.0; 2]; nloc];
        let mut avg = vec![[0.0; 2]; nloc];
        let mut trace_part = vec![[0.0; 2]; nloc];
        let mut idx = vec![0usize; nloc];
        let mut cgrads = vec![[0.0; 2]; nv];
        let pen = 2.0 * prm.beta * mu / h;
        let cell = &mesh.cells[c];
        for e in 0..3 {
            let f = cell.facets[e];
            let tag = mesh.facets[f].tag;
            let aligned = cell.aligned[e];
            let (n, len) = mesh.local_facet_normal(c, e);
            for i in 0..nvel_cell {
                idx[i] = i;
            }
            for m in 0..2 * nt {
                idx[nvel_cell + m] = ubar0 + e * 2 * nt + m;
            }
            let boundary_convection = matches!(tag, FacetTag::Interface | FacetTag::GammaSN);
            let trace_coupling = matches!(tag, FacetTag::Interface | FacetTag::GammaSD | FacetTag::GammaSN);
            for (q, w) in re.edge_rule.weights.iter().enumerate() {
                let wq = w * len;
                let phi = &re.edge_vel_vals[e][q * nv..(q + 1) * nv];
                let tr = re.trace_at(q, aligned);
                for i in 0..nv {
                    cgrads[i] = map.push_gradient(re.edge_vel_grads[e][q * nv + i]);
                }
                for a in 0..2 {
                    for i in 0..nv {
                        let l = a * nv + i;
                        let mut ea = [0.0; 2];
                        ea[a] = phi[i];
                        jump[l] = ea;
                        avg[l] = ea;
                        trace_part[l] = [0.0; 2];
                        // 2 mu eps(phi e_a) n = mu ((grad phi . n) e_a + n_a grad phi)
                        let gn = cgrads[i][0] * n[0] + cgrads[i][1] * n[1];
                        let mut s = [mu * n[a] * cgrads[i][0], mu * n[a] * cgrads[i][1]];
                        s[a] += mu * gn;
                        flux[l] = s;
                    }
                    for m in 0..nt {
                        let l = nvel_cell + a * nt + m;
                        let mut ea = [0.0; 2];
                        ea[a] = tr[m];
                        jump[l] = [-ea[0], -ea[1]];
                        avg[l] = ea;
                        trace_part[l] = ea;
                        flux[l] = [0.0; 2];
                    }
                }
                if terms.viscous {
                    for (ii, &li) in idx.iter().enumerate() {
                        for (jj, &lj) in idx.iter().enumerate() {
                            let v = pen * dot(jump[jj], jump[ii]) - dot(flux[jj], jump[ii]) - dot(flux[ii], jump[jj]);
                            if v != 0.0 {
                                blk.add(li, lj, wq * v);
                            }
                        }
                    }
                }
                if let Some(prev) = lagged {
                    let wv = self.velocity_from(prev, c, phi);
                    let wn = wv[0] * n[0] + wv[1] * n[1];
                    let half = 0.5 * wn;
                    let up = 0.5 * wn.abs();
                    for (ii, &li) in idx.iter().enumerate() {
                        for (jj, &lj) in idx.iter().enumerate() {
                            let mut v = half * dot(avg[jj], jump[ii]) + up * dot(jump[jj], jump[ii]);
                            if boundary_convection {
                                v += wn * dot(trace_part[jj], trace_part[ii]);
                            }
                            if v != 0.0 {
                                blk.add(li, lj, wq * v);
                            }
                        }
                    }
                }
                if terms.coupling {
                    for r in 0..nt {
                        let row = pbar0 + e * nt + r;
                        for a in 0..2 {
                            for i in 0..nv {
                                let v = wq * tr[r] * phi[i] * n[a];
                                blk.add(row, a * nv + i, v);
                                blk.add(a * nv + i, row, v);
                            }
                            if trace_coupling {
                                for m in 0..nt {
                                    let col = ubar0 + e * 2 * nt + a * nt + m;
                                    let v = -wq * tr[r] * tr[m] * n[a];
                                    blk.add(row, col, v);
                                    blk.add(col, row, v);
                                }
                            }
                        }
                    }
                }
                if terms.load && tag == FacetTag::GammaSN {
                    let t = re.edge_rule.points[q][0];
                    let x = mesh.facet_point(f, ReferenceElement::canonical_param(t, aligned));
                    let sd = self.data.stress_s_data(x, n, input.time);
                    for a in 0..2 {
                        for m in 0..nt {
                            blk.rhs[ubar0 + e * 2 * nt + a * nt + m] += wq * sd[a] * tr[m];
                        }
                    }
                }
            }
        }
        blk
    }

    fn darcy_cell(&self, c: usize, input: &StepInput) -> LocalBlock {
        let (mesh, re, prm) = (self.mesh, self.re, self.params);
        let terms = input.terms;
        let (nv, np, nt) = (re.nv(), re.np(), re.nt());
        let mut blk = LocalBlock::zeros(self.element_dofs(Element::DarcyCell(c)));
        let p0 = 2 * nv;
        let pbar0 = p0 + np;
        let map = mesh.cell_map(c);
        let resist = prm.mu / prm.kappa_at(c);
        let mut grads = vec![[0.0; 2]; nv];
        for (q, w) in re.cell_rule.weights.iter().enumerate() {
            let wq = w * map.det;
            let phi = &re.vel_vals[q * nv..(q + 1) * nv];
            let psi = &re.pres_vals[q * np..(q + 1) * np];
            if terms.darcy {
                for i in 0..nv {
                    for j in 0..nv {
                        let v = wq * resist * phi[i] * phi[j];
                        blk.add(i, j, v);
                        blk.add(nv + i, nv + j, v);
                    }
                }
            }
            if terms.coupling {
                for i in 0..nv {
                    grads[i] = map.push_gradient(re.vel_grads[q * nv + i]);
                }
                for l in 0..np {
                    for a in 0..2 {
                        for i in 0..nv {
                            let v = -wq * psi[l] * grads[i][a];
                            blk.add(p0 + l, a * nv + i, v);
                            blk.add(a * nv + i, p0 + l, v);
                        }
                    }
                }
            }
            if terms.load {
                let x = map.map(re.cell_rule.points[q]);
                let fd = self.data.forcing_d(x, input.time);
                for l in 0..np {
                    blk.rhs[p0 + l] += wq * fd * psi[l];
                }
            }
        }
        let cell = &mesh.cells[c];
        for e in 0..3 {
            let f = cell.facets[e];
            let tag = mesh.facets[f].tag;
            let aligned = cell.aligned[e];
            let (n, len) = mesh.local_facet_normal(c, e);
            for (q, w) in re.edge_rule.weights.iter().enumerate() {
                let wq = w * len;
                let phi = &re.edge_vel_vals[e][q * nv..(q + 1) * nv];
                let tr = re.trace_at(q, aligned);
                if terms.coupling {
                    for r in 0..nt {
                        let row = pbar0 + e * nt + r;
                        for a in 0..2 {
                            for i in 0..nv {
                                let v = wq * tr[r] * phi[i] * n[a];
                                blk.add(row, a * nv + i, v);
                                blk.add(a * nv + i, row, v);
                            }
                        }
                    }
                }
                if terms.load && tag == FacetTag::GammaDN {
                    let t = re.edge_rule.points[q][0];
                    let x = mesh.facet_point(f, ReferenceElement::canonical_param(t, aligned));
                    let g = self.data.flux_d_data(x, n, input.time);
                    for r in 0..nt {
                        blk.rhs[pbar0 + e * nt + r] += wq * g * tr[r];
                    }
                }
            }
        }
        blk
    }

    fn interface_facet(&self, f: usize, input: &StepInput) -> LocalBlock {
        let (mesh, re, prm) = (self.mesh, self.re, self.params);
        let terms = input.terms;
        let nt = re.nt();
        let mut blk = LocalBlock::zeros(self.element_dofs(Element::InterfaceFacet(f)));
        let pd0 = 2 * nt;
        let geo = mesh.facet_geometry(f);
        let n = geo.normal;
        let darcy_cell = mesh.facets[f].neighbor.expect("interface facet has two sides").0;
        let slip = prm.alpha * prm.mu / prm.kappa_at(darcy_cell).sqrt();
        for (q, w) in re.edge_rule.weights.iter().enumerate() {
            let wq = w * geo.length;
            let tr = re.trace_at(q, true);
            if terms.slip {
                for a in 0..2 {
                    for b in 0..2 {
                        let proj = if a == b { 1.0 } else { 0.0 } - n[a] * n[b];
                        for m in 0..nt {
                            for l in 0..nt {
                                blk.add(a * nt + m, b * nt + l, wq * slip * proj * tr[m] * tr[l]);
                            }
                        }
                    }
                }
            }
            if terms.coupling {
                for r in 0..nt {
                    for a in 0..2 {
                        for m in 0..nt {
                            let v = wq * tr[r] * tr[m] * n[a];
                            blk.add(pd0 + r, a * nt + m, v);
                            blk.add(a * nt + m, pd0 + r, v);
                        }
                    }
                }
            }
            if terms.load {
                let x = mesh.facet_point(f, re.edge_rule.points[q][0]);
                let force = self.data.interface_force(x, n, input.time);
                let me = self.data.interface_slip(x, n, input.time);
                let men = me[0] * n[0] + me[1] * n[1];
                let met = [me[0] - men * n[0], me[1] - men * n[1]];
                let mass = self.data.interface_mass(x, n, input.time);
                for a in 0..2 {
                    for m in 0..nt {
                        blk.rhs[a * nt + m] -= wq * (force * n[a] + met[a]) * tr[m];
                    }
                }
                for r in 0..nt {
                    blk.rhs[pd0 + r] += wq * mass * tr[r];
                }
            }
        }
        blk
    }

    fn stokes_only(&self, c: usize, terms: Terms, previous: Option<&[f64]>) -> Result<LocalBlock> {
        if self.mesh.cells[c].subdomain != Subdomain::Stokes {
            return Err(HdgError::InvalidParameter(format!("cell {c} is not a free-flow cell")));
        }
        let input = StepInput {
            previous,
            ..StepInput::only(terms)
        };
        Ok(self.stokes_cell(c, &input))
    }

    /// Viscous form with interior penalty on one free-flow cell.
    pub fn local_ah_s(&self, c: usize) -> Result<LocalBlock> {
        self.stokes_only(
            c,
            Terms {
                viscous: true,
                ..Terms::NONE
            },
            None,
        )
    }

    /// Darcy resistance on one porous cell.
    pub fn local_ad(&self, c: usize) -> Result<LocalBlock> {
        if self.mesh.cells[c].subdomain != Subdomain::Darcy {
            return Err(HdgError::InvalidParameter(format!("cell {c} is not a porous cell")));
        }
        Ok(self.darcy_cell(
            c,
            &StepInput::only(Terms {
                darcy: true,
                ..Terms::NONE
            }),
        ))
    }

    /// Slip-law form on one interface facet.
    pub fn local_a_interface(&self, f: usize) -> Result<LocalBlock> {
        if self.mesh.facets[f].tag != FacetTag::Interface {
            return Err(HdgError::InvalidParameter(format!("facet {f} is not on the interface")));
        }
        Ok(self.interface_facet(
            f,
            &StepInput::only(Terms {
                slip: true,
                ..Terms::NONE
            }),
        ))
    }

    /// Convection form on one free-flow cell, convecting velocity taken
    /// from the global vector `lagged`.
    pub fn local_th(&self, c: usize, lagged: &[f64]) -> Result<LocalBlock> {
        self.stokes_only(
            c,
            Terms {
                convection: true,
                ..Terms::NONE
            },
            Some(lagged),
        )
    }

    /// Velocity-pressure coupling on one cell (either subdomain).
    pub fn local_bh(&self, c: usize) -> LocalBlock {
        let input = StepInput::only(Terms::COUPLING);
        match self.mesh.cells[c].subdomain {
            Subdomain::Stokes => self.stokes_cell(c, &input),
            Subdomain::Darcy => self.darcy_cell(c, &input),
        }
    }

    /// Load vector of one element at time `t`.
    pub fn local_rhs(&self, el: Element, t: f64, stationary: bool) -> LocalBlock {
        let input = StepInput {
            time: t,
            stationary,
            ..StepInput::only(Terms {
                load: true,
                ..Terms::NONE
            })
        };
        self.element(el, &input)
    }
}

#[inline]
fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femlib::{cell_quadrature_degree, facet_quadrature_degree};
    use crate::mesh::{build_structured, DomainSpec};
    use crate::scenarios::ZeroData;
    use crate::spaces::{build_dofs, l2_project_cell, l2_project_facet_vector, BcMode};

    struct Fixture {
        mesh: Mesh,
        dofs: DofSystem,
        re: ReferenceElement,
        params: PhysicalParams,
        data: ZeroData,
    }

    impl Fixture {
        fn new(k: usize, ny: usize) -> Self {
            let mesh = build_structured(&DomainSpec::manufactured(), ny).unwrap();
            let dofs = build_dofs(&mesh, k, BcMode::Inhomogeneous).unwrap();
            Self {
                mesh,
                dofs,
                re: ReferenceElement::new(k).unwrap(),
                params: PhysicalParams::new(0.3, 2e-2, 0.7, k),
                data: ZeroData { initial: |_| [0.0; 2] },
            }
        }

        fn ctx(&self) -> FormContext<'_> {
            FormContext {
                mesh: &self.mesh,
                dofs: &self.dofs,
                re: &self.re,
                params: &self.params,
                data: &self.data,
            }
        }

        /// Global vector holding projections of `u` in every cell velocity
        /// and every velocity trace; pressures zero.
        fn velocity_field(&self, u: impl Fn([f64; 2]) -> [f64; 2] + Copy) -> Vec<f64> {
            let (mesh, dofs, re) = (&self.mesh, &self.dofs, &self.re);
            let mut x = vec![0.0; dofs.n_total];
            let qc = cell_quadrature_degree(dofs.k);
            for c in 0..mesh.num_cells() {
                let o = dofs.cell_velocity(c);
                for a in 0..2 {
                    let p = l2_project_cell(mesh, c, &re.velocity, qc, |y| u(y)[a]).unwrap();
                    x[o + a * dofs.nv..o + (a + 1) * dofs.nv].copy_from_slice(&p);
                }
            }
            for f in 0..mesh.num_facets() {
                if let Some(o) = dofs.facet_velocity(f) {
                    let p = l2_project_facet_vector(mesh, f, &re.trace, facet_quadrature_degree(dofs.k), u).unwrap();
                    x[o..o + p.len()].copy_from_slice(&p);
                }
            }
            x
        }
    }

    fn energy(blk: &LocalBlock, global: &[f64]) -> f64 {
        let x = blk.gather(global);
        blk.apply(&x).iter().zip(&x).map(|(a, b)| a * b).sum()
    }

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn assert_symmetric(blk: &LocalBlock, tol: f64) {
        let n = blk.size();
        for i in 0..n {
            for j in 0..n {
                assert!((blk.get(i, j) - blk.get(j, i)).abs() <= tol, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn viscous_form_vanishes_on_rigid_motions() {
        for k in 1..=3 {
            let fx = Fixture::new(k, 2);
            let ctx = fx.ctx();
            let motions: [fn([f64; 2]) -> [f64; 2]; 3] = [|_| [1.0, 0.0], |_| [0.0, -2.0], |x| [-x[1], x[0]]];
            for u in motions {
                let x = fx.velocity_field(u);
                for c in fx.mesh.cells_in(Subdomain::Stokes) {
                    let blk = ctx.local_ah_s(c).unwrap();
                    let r = blk.apply(&blk.gather(&x));
                    assert!(max_abs(&r) < 1e-11, "k={k} cell {c}: {}", max_abs(&r));
                }
            }
        }
    }

    #[test]
    fn viscous_form_is_symmetric_and_positive_on_shear() {
        let fx = Fixture::new(2, 1);
        let ctx = fx.ctx();
        let x = fx.velocity_field(|p| [p[1], 0.0]);
        for c in fx.mesh.cells_in(Subdomain::Stokes) {
            let blk = ctx.local_ah_s(c).unwrap();
            assert_symmetric(&blk, 1e-12);
            assert!(energy(&blk, &x) > 0.0);
        }
    }

    #[test]
    fn darcy_resistance_is_scaled_mass() {
        let fx = Fixture::new(2, 1);
        let ctx = fx.ctx();
        let scale = fx.params.mu / 2e-2;
        let nv = fx.dofs.nv;
        for c in fx.mesh.cells_in(Subdomain::Darcy) {
            let blk = ctx.local_ad(c).unwrap();
            let det = fx.mesh.cell_map(c).det;
            for i in 0..blk.size() {
                for j in 0..blk.size() {
                    let expect = if i == j && i < 2 * nv { scale * det } else { 0.0 };
                    assert!((blk.get(i, j) - expect).abs() < 1e-12 * scale, "({i},{j})");
                }
            }
        }
        assert!(ctx.local_ad(0).is_err() || fx.mesh.cells[0].subdomain == Subdomain::Darcy);
    }

    #[test]
    fn slip_form_acts_on_tangential_trace_only() {
        let fx = Fixture::new(1, 2);
        let ctx = fx.ctx();
        let coeff = fx.params.alpha * fx.params.mu / 2e-2f64.sqrt();
        let mut seen = 0;
        for (f, facet) in fx.mesh.facets.iter().enumerate() {
            if facet.tag != FacetTag::Interface {
                continue;
            }
            seen += 1;
            let g = fx.mesh.facet_geometry(f);
            let n = g.normal;
            let tangent = fx.velocity_field(move |_| [-n[1], n[0]]);
            let normal = fx.velocity_field(move |_| n);
            let blk = ctx.local_a_interface(f).unwrap();
            assert_symmetric(&blk, 1e-14);
            assert!((energy(&blk, &tangent) - coeff * g.length).abs() < 1e-12);
            assert!(energy(&blk, &normal).abs() < 1e-12);
        }
        assert!(seen > 0);
        assert!(ctx.local_a_interface(0).is_err() || fx.mesh.facets[0].tag == FacetTag::Interface);
    }

    #[test]
    fn convection_is_linear_in_the_lagged_velocity() {
        let fx = Fixture::new(2, 1);
        let ctx = fx.ctx();
        let w = fx.velocity_field(|p| [1.0 + p[1], p[0] * p[0]]);
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let zero = vec![0.0; w.len()];
        for c in fx.mesh.cells_in(Subdomain::Stokes) {
            let b0 = ctx.local_th(c, &zero).unwrap();
            assert_eq!(max_abs(&b0.matrix), 0.0);
            let b1 = ctx.local_th(c, &w).unwrap();
            let b2 = ctx.local_th(c, &w2).unwrap();
            assert!(max_abs(&b1.matrix) > 0.0);
            let diff: Vec<f64> = b2.matrix.iter().zip(&b1.matrix).map(|(a, b)| a - 2.0 * b).collect();
            assert!(max_abs(&diff) < 1e-12 * max_abs(&b2.matrix));
        }
    }

    #[test]
    fn coupling_annihilates_constant_pressures() {
        // -(q, div v) + <qbar, v.n> vanishes for q = qbar = const by the
        // divergence theorem; velocity traces are zeroed so the boundary
        // trace coupling drops out.
        let fx = Fixture::new(2, 2);
        let ctx = fx.ctx();
        let mut x = fx.velocity_field(|p| [p[0] * p[1], 1.0 - p[0] * p[0]]);
        let d = &fx.dofs;
        let (np, nt) = (d.np, d.nt);
        for c in fx.mesh.cells_in(Subdomain::Stokes) {
            let o = d.cell_pressure(c);
            x[o] = 0.5f64.sqrt();
            x[o + 1..o + np].fill(0.0);
        }
        for f in 0..fx.mesh.num_facets() {
            if let Some(o) = d.facet_velocity(f) {
                x[o..o + 2 * nt].fill(0.0);
            }
            if let Some(o) = d.facet_pressure_s(f) {
                x[o] = 1.0;
                x[o + 1..o + nt].fill(0.0);
            }
        }
        for c in fx.mesh.cells_in(Subdomain::Stokes) {
            let blk = ctx.local_bh(c);
            assert_symmetric(&blk, 0.0);
            assert!(energy(&blk, &x).abs() < 1e-12, "cell {c}: {}", energy(&blk, &x));
        }
    }

    #[test]
    fn loads_vanish_for_zero_data() {
        let fx = Fixture::new(2, 1);
        let ctx = fx.ctx();
        for el in Element::all(&fx.mesh) {
            for stationary in [false, true] {
                assert_eq!(max_abs(&ctx.local_rhs(el, 0.3, stationary).rhs), 0.0);
            }
        }
    }

    #[test]
    fn mass_term_scales_with_inverse_step() {
        let fx = Fixture::new(1, 1);
        let ctx = fx.ctx();
        let c = fx.mesh.cells_in(Subdomain::Stokes).next().unwrap();
        let only_mass = |dt: f64| {
            let input = StepInput {
                dt,
                ..StepInput::only(Terms {
                    mass: true,
                    ..Terms::NONE
                })
            };
            ctx.element(Element::StokesCell(c), &input)
        };
        let det = fx.mesh.cell_map(c).det;
        let b = only_mass(0.25);
        for i in 0..2 * fx.dofs.nv {
            assert!((b.get(i, i) - det / 0.25).abs() < 1e-13);
        }
        let b2 = only_mass(0.5);
        let diff: Vec<f64> = b.matrix.iter().zip(&b2.matrix).map(|(a, b)| a - 2.0 * b).collect();
        assert!(max_abs(&diff) < 1e-13);
    }
}

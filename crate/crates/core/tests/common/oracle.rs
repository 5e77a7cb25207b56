//! Brute-force dense assembly of the fully discrete step written directly
//! from the global forms, compared with the sparse assembler.
//!
//! The oracle evaluates every global unknown's basis function at physical
//! quadrature points (its own rules, higher degree), loops over cells and
//! cell sides rather than element blocks, and never uses the precomputed
//! reference tables of the production code.

use hdg_core::femlib::{quadrature, QuadratureDomain, ReferenceElement};
use hdg_core::forms::{FormContext, PhysicalParams, StepInput};
use hdg_core::mesh::{build_structured, DomainSpec, FacetTag, Mesh, Rect, Subdomain};
use hdg_core::scenarios::{FlowData, Scenario};
use hdg_core::solver::{constrained_values, Assembler};
use hdg_core::spaces::{build_dofs, l2_project_cell, BcMode, DofSystem};

/// One square per subdomain: four triangles.
fn four_cell_mesh() -> Mesh {
    let mut spec = DomainSpec::manufactured();
    spec.rect_s = Rect { x: [0.0, 0.5], y: [0.0, 0.5] };
    spec.rect_d = Rect { x: [0.0, 0.5], y: [-0.5, 0.0] };
    for rule in &mut spec.boundary_tag_rules {
        if rule.value == 1.0 {
            rule.value = 0.5;
        }
    }
    let mesh = build_structured(&spec, 1).unwrap();
    assert_eq!(mesh.num_cells(), 4);
    for tag in [FacetTag::Interface, FacetTag::GammaSD, FacetTag::GammaSN, FacetTag::GammaDD, FacetTag::GammaDN] {
        assert!(mesh.facet_count(tag) > 0, "{tag:?}");
    }
    mesh
}

#[derive(Clone, Copy, Default)]
struct Values {
    u: [f64; 2],
    grad: [[f64; 2]; 2],
    p: f64,
    ubar: [f64; 2],
    pbar_s: f64,
    pbar_d: f64,
}

struct Evaluator<'a> {
    mesh: &'a Mesh,
    dofs: &'a DofSystem,
    re: &'a ReferenceElement,
}

impl Evaluator<'_> {
    /// Cell fields of `x` in cell `c` at physical point `y`.
    fn cell(&self, x: &[f64], c: usize, y: [f64; 2]) -> Values {
        let (dofs, re) = (self.dofs, self.re);
        let map = self.mesh.cell_map(c);
        let xi = map.inverse(y);
        let (nv, np) = (dofs.nv, dofs.np);
        let mut phi = vec![0.0; nv];
        let mut dphi = vec![[0.0; 2]; nv];
        re.velocity.values_at(xi, &mut phi);
        re.velocity.ref_gradients_at(xi, &mut dphi);
        let mut psi = vec![0.0; np];
        re.pressure.values_at(xi, &mut psi);
        let ou = dofs.cell_velocity(c);
        let op = dofs.cell_pressure(c);
        let mut v = Values::default();
        for i in 0..nv {
            let g = map.push_gradient(dphi[i]);
            for a in 0..2 {
                let ca = x[ou + a * nv + i];
                v.u[a] += ca * phi[i];
                v.grad[a][0] += ca * g[0];
                v.grad[a][1] += ca * g[1];
            }
        }
        v.p = (0..np).map(|l| x[op + l] * psi[l]).sum();
        v
    }

    /// Cell fields plus the facet traces at canonical facet parameter `s`.
    fn side(&self, x: &[f64], c: usize, f: usize, s: f64) -> Values {
        let mut v = self.cell(x, c, self.mesh.facet_point(f, s));
        let nt = self.dofs.nt;
        let mut tr = vec![0.0; nt];
        self.re.trace.values_at([s, 0.0], &mut tr);
        let expand = |o: usize| (0..nt).map(|m| x[o + m] * tr[m]).sum::<f64>();
        if let Some(o) = self.dofs.facet_velocity(f) {
            v.ubar = [expand(o), expand(o + nt)];
        }
        if let Some(o) = self.dofs.facet_pressure_s(f) {
            v.pbar_s = expand(o);
        }
        if let Some(o) = self.dofs.facet_pressure_d(f) {
            v.pbar_d = expand(o);
        }
        v
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn strain_normal(mu: f64, g: [[f64; 2]; 2], n: [f64; 2]) -> [f64; 2] {
    let e = |a: usize, b: usize| 0.5 * (g[a][b] + g[b][a]);
    [2.0 * mu * (e(0, 0) * n[0] + e(0, 1) * n[1]), 2.0 * mu * (e(1, 0) * n[0] + e(1, 1) * n[1])]
}

fn strain_product(g: [[f64; 2]; 2], h: [[f64; 2]; 2]) -> f64 {
    let mut s = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            s += 0.5 * (g[a][b] + g[b][a]) * 0.5 * (h[a][b] + h[b][a]);
        }
    }
    s
}

/// A quadrature sample: physical point, weight, and where it lives.
enum Point {
    Cell { c: usize, y: [f64; 2], w: f64 },
    Side { c: usize, f: usize, s: f64, w: f64, n: [f64; 2] },
    Interface { f: usize, s: f64, w: f64, n: [f64; 2] },
}

struct Problem<'a> {
    mesh: &'a Mesh,
    params: &'a PhysicalParams,
    data: &'a dyn FlowData,
    ev: Evaluator<'a>,
    lagged: &'a [f64],
    dt: f64,
    time: f64,
    points: Vec<Point>,
}

impl Problem<'_> {
    fn build_points(mesh: &Mesh, k: usize) -> Vec<Point> {
        let tri = quadrature(QuadratureDomain::Triangle, 3 * k + 5).unwrap();
        let edge = quadrature(QuadratureDomain::Edge, 3 * k + 5).unwrap();
        let mut pts = Vec::new();
        for c in 0..mesh.num_cells() {
            let map = mesh.cell_map(c);
            for (p, w) in tri.points.iter().zip(&tri.weights) {
                pts.push(Point::Cell { c, y: map.map(*p), w: w * map.det.abs() });
            }
            for e in 0..3 {
                let f = mesh.cells[c].facets[e];
                let (n, len) = mesh.local_facet_normal(c, e);
                for (p, w) in edge.points.iter().zip(&edge.weights) {
                    pts.push(Point::Side { c, f, s: p[0], w: w * len, n });
                }
            }
        }
        for (f, facet) in mesh.facets.iter().enumerate() {
            if facet.tag == FacetTag::Interface {
                let g = mesh.facet_geometry(f);
                for (p, w) in edge.points.iter().zip(&edge.weights) {
                    pts.push(Point::Interface { f, s: p[0], w: w * g.length, n: g.normal });
                }
            }
        }
        pts
    }

    fn sample(&self, x: &[f64]) -> Vec<Values> {
        self.points
            .iter()
            .map(|pt| match *pt {
                Point::Cell { c, y, .. } => self.ev.cell(x, c, y),
                Point::Side { c, f, s, .. } => self.ev.side(x, c, f, s),
                Point::Interface { f, s, .. } => {
                    let owner = self.mesh.facets[f].owner.0;
                    self.ev.side(x, owner, f, s)
                }
            })
            .collect()
    }

    /// Lagged convecting velocity at every sample.
    fn convecting(&self) -> Vec<[f64; 2]> {
        self.sample(self.lagged).iter().map(|v| v.u).collect()
    }

    /// `B(trial, test)` of one backward Euler step.
    fn bilinear(&self, trial: &[Values], test: &[Values], w_lag: &[[f64; 2]]) -> f64 {
        let prm = self.params;
        let mu = prm.mu;
        let mut total = 0.0;
        for (i, pt) in self.points.iter().enumerate() {
            let (u, v, wv) = (&trial[i], &test[i], w_lag[i]);
            total += match *pt {
                Point::Cell { c, w, .. } => {
                    let div_u = u.grad[0][0] + u.grad[1][1];
                    let div_v = v.grad[0][0] + v.grad[1][1];
                    let coupling = -u.p * div_v - v.p * div_u;
                    match self.mesh.cells[c].subdomain {
                        Subdomain::Stokes => {
                            let mass = dot(u.u, v.u) / self.dt;
                            let visc = 2.0 * mu * strain_product(u.grad, v.grad);
                            let wgv = [dot(wv, v.grad[0]), dot(wv, v.grad[1])];
                            let conv = -dot(u.u, wgv);
                            w * (mass + visc + conv + coupling)
                        }
                        Subdomain::Darcy => w * (mu / prm.kappa_at(c) * dot(u.u, v.u) + coupling),
                    }
                }
                Point::Side { c, f, w, n, .. } => {
                    let tag = self.mesh.facets[f].tag;
                    match self.mesh.cells[c].subdomain {
                        Subdomain::Stokes => {
                            let pen = 2.0 * prm.beta * mu / self.mesh.h_cell[c];
                            let ju = sub(u.u, u.ubar);
                            let jv = sub(v.u, v.ubar);
                            let visc = pen * dot(ju, jv)
                                - dot(strain_normal(mu, u.grad, n), jv)
                                - dot(strain_normal(mu, v.grad, n), ju);
                            let wn = dot(wv, n);
                            let sum = [u.u[0] + u.ubar[0], u.u[1] + u.ubar[1]];
                            let mut conv = 0.5 * wn * dot(sum, jv) + 0.5 * wn.abs() * dot(ju, jv);
                            if matches!(tag, FacetTag::Interface | FacetTag::GammaSN) {
                                conv += wn * dot(u.ubar, v.ubar);
                            }
                            let mut coupling = v.pbar_s * dot(u.u, n) + u.pbar_s * dot(v.u, n);
                            if matches!(tag, FacetTag::Interface | FacetTag::GammaSD | FacetTag::GammaSN) {
                                coupling -= v.pbar_s * dot(u.ubar, n) + u.pbar_s * dot(v.ubar, n);
                            }
                            w * (visc + conv + coupling)
                        }
                        Subdomain::Darcy => w * (v.pbar_d * dot(u.u, n) + u.pbar_d * dot(v.u, n)),
                    }
                }
                Point::Interface { f, w, n, .. } => {
                    let darcy = self.mesh.facets[f].neighbor.unwrap().0;
                    let slip = prm.alpha * mu / prm.kappa_at(darcy).sqrt();
                    let tang = |a: [f64; 2]| {
                        let an = dot(a, n);
                        [a[0] - an * n[0], a[1] - an * n[1]]
                    };
                    let coupling = v.pbar_d * dot(u.ubar, n) + u.pbar_d * dot(v.ubar, n);
                    w * (slip * dot(tang(u.ubar), tang(v.ubar)) + coupling)
                }
            };
        }
        total
    }

    /// Load functional of one step.
    fn load(&self, test: &[Values], previous: &[Values]) -> f64 {
        let (data, t) = (self.data, self.time);
        let mut total = 0.0;
        for (i, pt) in self.points.iter().enumerate() {
            let v = &test[i];
            total += match *pt {
                Point::Cell { c, y, w } => match self.mesh.cells[c].subdomain {
                    Subdomain::Stokes => {
                        let f = data.forcing_s(y, t);
                        let un = previous[i].u;
                        w * (dot(f, v.u) + dot(un, v.u) / self.dt)
                    }
                    Subdomain::Darcy => w * data.forcing_d(y, t) * v.p,
                },
                Point::Side { f, s, w, n, .. } => {
                    let y = self.mesh.facet_point(f, s);
                    match self.mesh.facets[f].tag {
                        FacetTag::GammaSN => w * dot(data.stress_s_data(y, n, t), v.ubar),
                        FacetTag::GammaDN => w * data.flux_d_data(y, n, t) * v.pbar_d,
                        _ => 0.0,
                    }
                }
                Point::Interface { f, s, w, n } => {
                    let y = self.mesh.facet_point(f, s);
                    let force = data.interface_force(y, n, t);
                    let me = data.interface_slip(y, n, t);
                    let men = dot(me, n);
                    let met = [me[0] - men * n[0], me[1] - men * n[1]];
                    let mass = data.interface_mass(y, n, t);
                    w * (-(force * dot(n, v.ubar)) - dot(met, v.ubar) + mass * v.pbar_d)
                }
            };
        }
        total
    }
}

/// Lagged state whose normal component keeps one sign on every facet, so
/// the upwind weight `|w.n|` is polynomial and both quadratures are exact.
fn convecting_field(mesh: &Mesh, dofs: &DofSystem, re: &ReferenceElement) -> Vec<f64> {
    let mut x = vec![0.0; dofs.n_total];
    let w = |y: [f64; 2]| [2.0 + y[0], 1.0 + 0.5 * y[1]];
    for c in 0..mesh.num_cells() {
        let o = dofs.cell_velocity(c);
        for a in 0..2 {
            let p = l2_project_cell(mesh, c, &re.velocity, 8, |y| w(y)[a]).unwrap();
            x[o + a * dofs.nv..o + (a + 1) * dofs.nv].copy_from_slice(&p);
        }
    }
    x
}

/// Largest entrywise differences (matrix, load) between the sparse
/// assembler and the oracle on the four-cell mesh.
pub fn compare(k: usize) -> (f64, f64) {
    let mesh = four_cell_mesh();
    // Polynomial data keep the load integrals exact under both quadratures.
    let scenario = Scenario::polynomial_patch(k, 0.1, 1e-2, 1.0);
    let dofs = build_dofs(&mesh, k, BcMode::Inhomogeneous).unwrap();
    let re = ReferenceElement::new(k).unwrap();
    let params = scenario.physical_params(&mesh, k);
    let data = scenario.data.as_ref();
    let ctx = FormContext {
        mesh: &mesh,
        dofs: &dofs,
        re: &re,
        params: &params,
        data,
    };
    let (time, dt) = (0.3, 0.05);
    let lagged = convecting_field(&mesh, &dofs, &re);
    let cv = constrained_values(&mesh, &dofs, &re, data, time).unwrap();
    let sys = Assembler::new(ctx).unwrap().assemble(&StepInput::step(time, dt, &lagged), &cv);
    let sparse = sys.to_dense();
    assert!(sys.rhs.iter().any(|v| v.abs() > 1e-3));

    let problem = Problem {
        mesh: &mesh,
        params: &params,
        data,
        ev: Evaluator { mesh: &mesh, dofs: &dofs, re: &re },
        lagged: &lagged,
        dt,
        time,
        points: Problem::build_points(&mesh, k),
    };
    let w_lag = problem.convecting();
    let previous = problem.sample(&lagged);
    let n = dofs.n_total;
    let samples: Vec<Vec<Values>> = (0..n)
        .map(|g| {
            let mut e = vec![0.0; n];
            e[g] = 1.0;
            problem.sample(&e)
        })
        .collect();
    let cv_samples = problem.sample(&cv);

    let mut entry_err = 0.0f64;
    let mut rhs_err = 0.0f64;
    for gi in 0..n {
        let Some(fi) = dofs.free(gi) else { continue };
        let lifted = problem.load(&samples[gi], &previous) - problem.bilinear(&cv_samples, &samples[gi], &w_lag);
        rhs_err = rhs_err.max((lifted - sys.rhs[fi]).abs());
        for gj in 0..n {
            let Some(fj) = dofs.free(gj) else { continue };
            let a = problem.bilinear(&samples[gj], &samples[gi], &w_lag);
            entry_err = entry_err.max((a - sparse[(fi, fj)]).abs());
        }
    }
    (entry_err, rhs_err)
}


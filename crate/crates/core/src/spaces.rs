//! Global numbering of the discrete unknowns, boundary constraints, and the
//! projection and interpolation operators used for data and initial states.
//!
//! Layout of the global vector: cell velocities, facet velocities, cell
//! pressures, free-flow facet pressures, porous facet pressures. Velocity
//! blocks store the `x` component first.

use faer::prelude::*;
use faer::Mat;
use rayon::prelude::*;

use crate::error::{HdgError, Result};
use crate::femlib::{dim_triangle, quadrature, QuadratureDomain, ReferenceElement, MAX_DEGREE};
use crate::mesh::{FacetTag, Mesh, Subdomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcMode {
    /// Trace velocity fixed to zero on the whole free-flow boundary.
    Homogeneous,
    /// Trace velocity prescribed only on velocity-data facets; free on
    /// stress-data facets.
    Inhomogeneous,
}

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct DofSystem {
    pub k: usize,
    pub bc_mode: BcMode,
    /// `dim P_k`
    pub nv: usize,
    /// `dim P_{k-1}`
    pub np: usize,
    /// `k + 1`
    pub nt: usize,
    cell_u: Vec<usize>,
    cell_p: Vec<usize>,
    facet_u: Vec<usize>,
    facet_ps: Vec<usize>,
    facet_pd: Vec<usize>,
    /// Number of velocity unknowns; pressures follow.
    pub n_velocity: usize,
    pub n_total: usize,
    pub constrained: Vec<bool>,
    free_index: Vec<usize>,
    pub n_free: usize,
}

/// Coefficients of every unknown (constrained entries hold their data) at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub coeffs: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn zeros(dofs: &DofSystem, time: f64) -> Self {
        Self {
            coeffs: vec![0.0; dofs.n_total],
            time,
        }
    }
}

/// Number the unknowns of `mesh` for degree `k`.
pub fn build_dofs(mesh: &Mesh, k: usize, bc_mode: BcMode) -> Result<DofSystem> {
    if k == 0 || k > MAX_DEGREE {
        return Err(HdgError::UnsupportedDegree(k));
    }
    let nv = dim_triangle(k);
    let np = dim_triangle(k - 1);
    let nt = k + 1;
    let nc = mesh.num_cells();
    let nf = mesh.num_facets();

    let mut next = 0usize;
    let mut cell_u = Vec::with_capacity(nc);
    for _ in 0..nc {
        cell_u.push(next);
        next += 2 * nv;
    }
    let mut facet_u = vec![NONE; nf];
    for (f, facet) in mesh.facets.iter().enumerate() {
        if facet.tag.touches_stokes() {
            facet_u[f] = next;
            next += 2 * nt;
        }
    }
    let n_velocity = next;
    let mut cell_p = Vec::with_capacity(nc);
    for _ in 0..nc {
        cell_p.push(next);
        next += np;
    }
    let mut facet_ps = vec![NONE; nf];
    for (f, facet) in mesh.facets.iter().enumerate() {
        if facet.tag.touches_stokes() {
            facet_ps[f] = next;
            next += nt;
        }
    }
    let mut facet_pd = vec![NONE; nf];
    for (f, facet) in mesh.facets.iter().enumerate() {
        if facet.tag.touches_darcy() {
            facet_pd[f] = next;
            next += nt;
        }
    }
    let n_total = next;

    let mut constrained = vec![false; n_total];
    for (f, facet) in mesh.facets.iter().enumerate() {
        let fix_velocity = match (facet.tag, bc_mode) {
            (FacetTag::GammaSD, _) => true,
            (FacetTag::GammaSN, BcMode::Homogeneous) => true,
            _ => false,
        };
        if fix_velocity {
            constrained[facet_u[f]..facet_u[f] + 2 * nt].fill(true);
        }
        if facet.tag == FacetTag::GammaDD {
            constrained[facet_pd[f]..facet_pd[f] + nt].fill(true);
        }
    }
    let mut dofs = DofSystem {
        k,
        bc_mode,
        nv,
        np,
        nt,
        cell_u,
        cell_p,
        facet_u,
        facet_ps,
        facet_pd,
        n_velocity,
        n_total,
        constrained,
        free_index: Vec::new(),
        n_free: 0,
    };
    dofs.renumber_free();
    Ok(dofs)
}

impl DofSystem {
    fn renumber_free(&mut self) {
        self.free_index = vec![NONE; self.n_total];
        let mut n = 0;
        for (i, c) in self.constrained.iter().enumerate() {
            if !c {
                self.free_index[i] = n;
                n += 1;
            }
        }
        self.n_free = n;
    }

    /// Same numbering with the porous pressure-data traces left free (the
    /// porous pressure is then only determined up to a constant).
    pub fn without_darcy_pressure_constraint(&self, mesh: &Mesh) -> Self {
        let mut d = self.clone();
        for (f, facet) in mesh.facets.iter().enumerate() {
            if facet.tag == FacetTag::GammaDD {
                let o = d.facet_pd[f];
                d.constrained[o..o + d.nt].fill(false);
            }
        }
        d.renumber_free();
        d
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.cell_u.len() != mesh.num_cells() || self.facet_u.len() != mesh.num_facets() {
            return Err(HdgError::DofMismatch(format!(
                "numbering for {} cells / {} facets, mesh has {} / {}",
                self.cell_u.len(),
                self.facet_u.len(),
                mesh.num_cells(),
                mesh.num_facets()
            )));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.cell_u.len()
    }

    /// First of `2 * nv` cell velocity unknowns (`x` block, then `y` block).
    pub fn cell_velocity(&self, c: usize) -> usize {
        self.cell_u[c]
    }

    pub fn cell_pressure(&self, c: usize) -> usize {
        self.cell_p[c]
    }

    /// First of `2 * nt` facet velocity unknowns, if the facet carries them.
    pub fn facet_velocity(&self, f: usize) -> Option<usize> {
        some(self.facet_u[f])
    }

    pub fn facet_pressure_s(&self, f: usize) -> Option<usize> {
        some(self.facet_ps[f])
    }

    pub fn facet_pressure_d(&self, f: usize) -> Option<usize> {
        some(self.facet_pd[f])
    }

    /// Index among free unknowns, or `None` for constrained ones.
    pub fn free(&self, dof: usize) -> Option<usize> {
        some(self.free_index[dof])
    }

    /// Cell (element-interior) unknown, as opposed to a facet trace.
    pub fn is_cell_unknown(&self, dof: usize) -> bool {
        let nc = self.cell_u.len();
        if nc == 0 {
            return false;
        }
        dof < 2 * self.nv * nc || (self.cell_p[0]..self.cell_p[0] + self.np * nc).contains(&dof)
    }

    pub fn is_velocity(&self, dof: usize) -> bool {
        dof < self.n_velocity
    }

    /// Free velocity unknowns in increasing global order.
    pub fn free_velocity_dofs(&self) -> Vec<usize> {
        (0..self.n_velocity).filter(|&i| !self.constrained[i]).collect()
    }

    pub fn free_pressure_dofs(&self) -> Vec<usize> {
        (self.n_velocity..self.n_total).filter(|&i| !self.constrained[i]).collect()
    }

    pub fn constrained_count(&self) -> usize {
        self.constrained.iter().filter(|&&c| c).count()
    }
}

fn some(i: usize) -> Option<usize> {
    (i != NONE).then_some(i)
}

/// Coefficients of the `L^2(K)` projection of `f` onto `P_m(K)` in the
/// orthonormal basis `basis` (velocity or pressure basis of `re`).
pub fn l2_project_cell(
    mesh: &Mesh,
    cell: usize,
    basis: &crate::femlib::Basis,
    quad_degree: usize,
    f: impl Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    let map = mesh.cell_map(cell);
    // The orthonormal reference basis has physical Gram matrix det(J) * I.
    basis.project_reference(|xi| f(map.map(xi)), quad_degree)
}

/// Coefficients of the `L^2(F)` projection of `g` onto `P_k(F)` in the
/// facet Legendre basis along the canonical facet direction.
pub fn l2_project_facet(
    mesh: &Mesh,
    facet: usize,
    trace: &crate::femlib::Basis,
    quad_degree: usize,
    g: impl Fn([f64; 2]) -> f64,
) -> Result<Vec<f64>> {
    trace.project_reference(|s| g(mesh.facet_point(facet, s[0])), quad_degree)
}

/// Vector-valued facet projection, component blocks `[x.., y..]`.
pub fn l2_project_facet_vector(
    mesh: &Mesh,
    facet: usize,
    trace: &crate::femlib::Basis,
    quad_degree: usize,
    g: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<f64>> {
    let mut out = l2_project_facet(mesh, facet, trace, quad_degree, |x| g(x)[0])?;
    out.extend(l2_project_facet(mesh, facet, trace, quad_degree, |x| g(x)[1])?);
    Ok(out)
}

/// H(div)-conforming interpolation of `u` into `[P_k(K)]^2` on every cell of
/// `cells`: normal moments against `P_k` on each edge and interior moments
/// against `grad P_{k-1}` and `curl(b_K P_{k-2})`, with `b_K` the cubic bubble.
///
/// Returns the cell velocity blocks (`2 * nv` coefficients per cell).
pub fn bdm_interpolate(
    mesh: &Mesh,
    re: &ReferenceElement,
    cells: &[usize],
    u: impl Fn([f64; 2]) -> [f64; 2] + Sync,
) -> Result<Vec<Vec<f64>>> {
    let k = re.k;
    let qdeg = (2 * k + 6).min(crate::femlib::quadrature::MAX_QUADRATURE_DEGREE);
    let edge_rule = quadrature(QuadratureDomain::Edge, qdeg)?;
    let cell_rule = quadrature(QuadratureDomain::Triangle, qdeg)?;
    let nv = re.nv();
    let n = 2 * nv;

    cells
        .par_iter()
        .map(|&c| {
            let map = mesh.cell_map(c);
            let mut vand = Mat::<f64>::zeros(n, n);
            let mut rhs = Mat::<f64>::zeros(n, 1);
            let mut row = 0;
            let mut vals = vec![0.0; nv];
            let mut tr = vec![0.0; k + 1];

            for e in 0..3 {
                let (normal, len) = mesh.local_facet_normal(c, e);
                let aligned = mesh.cells[c].aligned[e];
                for (t, w) in edge_rule.points.iter().zip(&edge_rule.weights) {
                    let xi = crate::femlib::edge_reference_point(e, t[0]);
                    let x = map.map(xi);
                    re.velocity.values_at(xi, &mut vals);
                    re.trace.values_at([ReferenceElement::canonical_param(t[0], aligned), 0.0], &mut tr);
                    let uv = u(x);
                    let un = uv[0] * normal[0] + uv[1] * normal[1];
                    for j in 0..=k {
                        let wt = w * len * tr[j];
                        for i in 0..nv {
                            vand[(row + j, i)] += wt * vals[i] * normal[0];
                            vand[(row + j, nv + i)] += wt * vals[i] * normal[1];
                        }
                        rhs[(row + j, 0)] += wt * un;
                    }
                }
                row += k + 1;
            }

            // interior test fields
            let np = re.np();
            let mut pgrad = vec![[0.0; 2]; np];
            let bubble_deg = k.saturating_sub(2);
            let bubble_basis = if k >= 2 {
                Some(crate::femlib::Basis::new(crate::femlib::BasisKind::CellOrthonormal, bubble_deg)?)
            } else {
                None
            };
            let nb = bubble_basis.as_ref().map_or(0, |b| b.dim());
            let mut bvals = vec![0.0; nb];
            let mut bgrads = vec![[0.0; 2]; nb];
            for (xi, w) in cell_rule.points.iter().zip(&cell_rule.weights) {
                let x = map.map(*xi);
                let wd = w * map.det;
                re.velocity.values_at(*xi, &mut vals);
                let uv = u(x);
                let mut tests: Vec<[f64; 2]> = Vec::with_capacity(n - row);
                re.pressure.ref_gradients_at(*xi, &mut pgrad);
                // skip the constant pressure mode (index 0 of the orthonormal basis)
                for g in pgrad.iter().skip(1) {
                    tests.push(map.push_gradient(*g));
                }
                if let Some(bb) = &bubble_basis {
                    // b = l0 l1 l2 in reference barycentrics; curl(b q) = (d_y, -d_x)(b q)
                    let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
                    let b = l[0] * l[1] * l[2];
                    let db = [
                        -l[1] * l[2] + l[0] * l[2],
                        -l[1] * l[2] + l[0] * l[1],
                    ];
                    bb.values_at(*xi, &mut bvals);
                    bb.ref_gradients_at(*xi, &mut bgrads);
                    for j in 0..nb {
                        let gr = [db[0] * bvals[j] + b * bgrads[j][0], db[1] * bvals[j] + b * bgrads[j][1]];
                        let gp = map.push_gradient(gr);
                        tests.push([gp[1], -gp[0]]);
                    }
                }
                for (j, tv) in tests.iter().enumerate() {
                    for i in 0..nv {
                        vand[(row + j, i)] += wd * vals[i] * tv[0];
                        vand[(row + j, nv + i)] += wd * vals[i] * tv[1];
                    }
                    rhs[(row + j, 0)] += wd * (uv[0] * tv[0] + uv[1] * tv[1]);
                }
            }
            let interior = (np - 1) + nb;
            if row + interior != n {
                return Err(HdgError::SingularLocalSystem(format!(
                    "interpolation functionals {} do not match {} unknowns",
                    row + interior,
                    n
                )));
            }
            let lu = vand.partial_piv_lu();
            let sol = lu.solve(&rhs);
            let out: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
            if out.iter().any(|v| !v.is_finite()) {
                return Err(HdgError::SingularLocalSystem(format!("cell {c}")));
            }
            Ok(out)
        })
        .collect()
}

/// Evaluate the cell velocity at physical point `x` inside cell `c`.
pub fn cell_velocity_at(mesh: &Mesh, dofs: &DofSystem, re: &ReferenceElement, coeffs: &[f64], c: usize, x: [f64; 2]) -> [f64; 2] {
    let xi = mesh.cell_map(c).inverse(x);
    let o = dofs.cell_velocity(c);
    let nv = dofs.nv;
    [
        re.velocity.expand_at(&coeffs[o..o + nv], xi),
        re.velocity.expand_at(&coeffs[o + nv..o + 2 * nv], xi),
    ]
}

/// Fill all cell velocities of the free-flow subdomain from a BDM interpolant.
pub fn interpolate_stokes_velocity(
    mesh: &Mesh,
    dofs: &DofSystem,
    re: &ReferenceElement,
    state: &mut State,
    u: impl Fn([f64; 2]) -> [f64; 2] + Sync,
) -> Result<()> {
    let cells: Vec<usize> = mesh.cells_in(Subdomain::Stokes).collect();
    let blocks = bdm_interpolate(mesh, re, &cells, u)?;
    for (c, b) in cells.iter().zip(blocks) {
        let o = dofs.cell_velocity(*c);
        state.coeffs[o..o + b.len()].copy_from_slice(&b);
    }
    Ok(())
}

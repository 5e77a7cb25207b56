//! Conforming triangulations of two stacked subdomains (free flow on top,
//! porous medium below) matching along a piecewise-linear interface.
//!
//! Cells of the free-flow subdomain are numbered first, so every interface
//! facet is owned by its free-flow cell and the stored facet normal points
//! from the free-flow side into the porous side.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{HdgError, Result};
use crate::femlib::AffineMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subdomain {
    /// Navier-Stokes region.
    #[serde(rename = "s")]
    Stokes,
    /// Darcy region.
    #[serde(rename = "d")]
    Darcy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacetTag {
    InteriorS,
    InteriorD,
    Interface,
    /// Free-flow boundary with prescribed velocity.
    GammaSD,
    /// Free-flow boundary with prescribed normal stress.
    GammaSN,
    /// Porous boundary with prescribed pressure.
    GammaDD,
    /// Porous boundary with prescribed normal flux.
    GammaDN,
}

impl FacetTag {
    pub const ALL: [FacetTag; 7] = [
        FacetTag::InteriorS,
        FacetTag::InteriorD,
        FacetTag::Interface,
        FacetTag::GammaSD,
        FacetTag::GammaSN,
        FacetTag::GammaDD,
        FacetTag::GammaDN,
    ];

    /// Facet belongs to the closure of the free-flow subdomain.
    pub fn touches_stokes(self) -> bool {
        matches!(
            self,
            FacetTag::InteriorS | FacetTag::Interface | FacetTag::GammaSD | FacetTag::GammaSN
        )
    }

    /// Facet belongs to the closure of the porous subdomain.
    pub fn touches_darcy(self) -> bool {
        matches!(
            self,
            FacetTag::InteriorD | FacetTag::Interface | FacetTag::GammaDD | FacetTag::GammaDN
        )
    }

    pub fn is_stokes_boundary(self) -> bool {
        matches!(self, FacetTag::GammaSD | FacetTag::GammaSN)
    }

    pub fn is_exterior(self) -> bool {
        matches!(
            self,
            FacetTag::GammaSD | FacetTag::GammaSN | FacetTag::GammaDD | FacetTag::GammaDN
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x[1] - self.x[0]
    }
    pub fn height(&self) -> f64 {
        self.y[1] - self.y[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Tags exterior facets of `subdomain` whose midpoint lies on the line
/// `axis = value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagRule {
    pub subdomain: Subdomain,
    pub axis: Axis,
    pub value: f64,
    pub tag: FacetTag,
}

/// How each grid quadrilateral is cut into two triangles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    /// Every quadrilateral along the same diagonal. Edges then align with
    /// smooth transport directions, which costs half an order in the L2
    /// velocity error once convection dominates.
    Uniform,
    /// Diagonal direction alternates in a checkerboard pattern.
    #[default]
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// Nominal free-flow rectangle (above the interface).
    pub rect_s: Rect,
    /// Nominal porous rectangle (below the interface).
    pub rect_d: Rect,
    /// Interface vertices ordered by increasing `x`. Empty means the shared
    /// horizontal edge of the two rectangles.
    pub interface_polyline: Vec<[f64; 2]>,
    pub boundary_tag_rules: Vec<TagRule>,
    pub splitting: Splitting,
}

impl DomainSpec {
    /// `(0,1) x (0,0.5)` over `(0,1) x (-0.5,0)` with velocity data on
    /// `x = 0` and `y = 0.5`, stress data on `x = 1`, pressure data on the
    /// bottom and no-flux data on the porous sides.
    pub fn manufactured() -> Self {
        use Axis::*;
        use FacetTag::*;
        use Subdomain::*;
        let r = |subdomain, axis, value, tag| TagRule {
            subdomain,
            axis,
            value,
            tag,
        };
        Self {
            rect_s: Rect { x: [0.0, 1.0], y: [0.0, 0.5] },
            rect_d: Rect { x: [0.0, 1.0], y: [-0.5, 0.0] },
            interface_polyline: Vec::new(),
            boundary_tag_rules: vec![
                r(Stokes, X, 0.0, GammaSD),
                r(Stokes, Y, 0.5, GammaSD),
                r(Stokes, X, 1.0, GammaSN),
                r(Darcy, Y, -0.5, GammaDD),
                r(Darcy, X, 0.0, GammaDN),
                r(Darcy, X, 1.0, GammaDN),
            ],
            splitting: Splitting::default(),
        }
    }

    /// Same geometry with velocity data on the whole free-flow boundary.
    pub fn all_dirichlet(rect_s: Rect, rect_d: Rect, interface_polyline: Vec<[f64; 2]>) -> Self {
        use FacetTag::*;
        use Subdomain::*;
        let r = |subdomain, axis, value, tag| TagRule {
            subdomain,
            axis,
            value,
            tag,
        };
        Self {
            rect_s,
            rect_d,
            interface_polyline,
            boundary_tag_rules: vec![
                r(Stokes, Axis::X, rect_s.x[0], GammaSD),
                r(Stokes, Axis::X, rect_s.x[1], GammaSD),
                r(Stokes, Axis::Y, rect_s.y[1], GammaSD),
                r(Darcy, Axis::Y, rect_d.y[0], GammaDD),
                r(Darcy, Axis::X, rect_d.x[0], GammaDN),
                r(Darcy, Axis::X, rect_d.x[1], GammaDN),
            ],
            splitting: Splitting::default(),
        }
    }

    /// Unit-square layout with homogeneous-type tagging (velocity data on all
    /// of the free-flow boundary).
    pub fn unit_homogeneous() -> Self {
        Self::all_dirichlet(
            Rect { x: [0.0, 1.0], y: [0.0, 0.5] },
            Rect { x: [0.0, 1.0], y: [-0.5, 0.0] },
            Vec::new(),
        )
    }

    /// Resolved interface polyline (the default flat edge when none is given).
    pub fn polyline(&self) -> Vec<[f64; 2]> {
        if self.interface_polyline.is_empty() {
            vec![[self.rect_s.x[0], self.rect_s.y[0]], [self.rect_s.x[1], self.rect_s.y[0]]]
        } else {
            self.interface_polyline.clone()
        }
    }

    pub fn has_flat_interface(&self) -> bool {
        let y0 = self.rect_s.y[0];
        self.polyline().iter().all(|p| (p[1] - y0).abs() < 1e-14)
    }

    pub fn validate(&self) -> Result<()> {
        let (s, d) = (&self.rect_s, &self.rect_d);
        let bad = |m: &str| Err(HdgError::InvalidDomain(m.to_string()));
        if !(s.width() > 0.0 && s.height() > 0.0 && d.width() > 0.0 && d.height() > 0.0) {
            return bad("rectangles must have positive extent");
        }
        if s.x != d.x {
            return bad("subdomain rectangles must share their x-range");
        }
        if (s.y[0] - d.y[1]).abs() > 1e-14 {
            return bad("free-flow rectangle must sit directly on top of the porous rectangle");
        }
        let poly = self.polyline();
        if poly.len() < 2 {
            return bad("interface polyline needs at least two vertices");
        }
        if (poly[0][0] - s.x[0]).abs() > 1e-12 || (poly[poly.len() - 1][0] - s.x[1]).abs() > 1e-12 {
            return bad("interface polyline must span the full x-range");
        }
        for w in poly.windows(2) {
            if !(w[1][0] > w[0][0]) {
                return bad("interface polyline x-coordinates must increase strictly");
            }
        }
        for p in &poly {
            if !(p[1] > d.y[0] && p[1] < s.y[1]) {
                return bad("interface polyline must stay strictly inside the domain");
            }
        }
        for r in &self.boundary_tag_rules {
            let ok = match r.subdomain {
                Subdomain::Stokes => r.tag.touches_stokes() && r.tag.is_exterior(),
                Subdomain::Darcy => r.tag.touches_darcy() && r.tag.is_exterior(),
            };
            if !ok {
                return Err(HdgError::InvalidDomain(format!(
                    "tag {:?} cannot label the exterior boundary of {:?}",
                    r.tag, r.subdomain
                )));
            }
        }
        Ok(())
    }

    fn interface_y(&self, poly: &[[f64; 2]], x: f64) -> f64 {
        for w in poly.windows(2) {
            if x >= w[0][0] - 1e-14 && x <= w[1][0] + 1e-14 {
                let t = (x - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        poly[poly.len() - 1][1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Counter-clockwise vertex indices.
    pub vertices: [usize; 3],
    pub subdomain: Subdomain,
    /// Local facet `e` is opposite vertex `e` and runs from vertex `e+1` to `e+2`.
    pub facets: [usize; 3],
    /// Whether local facet `e` runs in the facet's canonical direction.
    pub aligned: [bool; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Facet {
    /// Canonical direction: from `vertices[0]` to `vertices[1]`.
    pub vertices: [usize; 2],
    /// `(cell, local facet index)`; the free-flow cell on the interface.
    pub owner: (usize, usize),
    pub neighbor: Option<(usize, usize)>,
    pub tag: FacetTag,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetGeometry {
    /// Outward normal of the owner cell; on the interface this is `n = n^s`.
    pub normal: [f64; 2],
    /// Outward normal of the neighbor cell, when there is one.
    pub neighbor_normal: Option<[f64; 2]>,
    pub length: f64,
    pub endpoints: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub spec: DomainSpec,
    pub ny: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    pub facets: Vec<Facet>,
    pub h_cell: Vec<f64>,
    pub h_max: f64,
    pub provenance: Option<Provenance>,
}

const MAX_ASPECT_RATIO: f64 = 4.0;

/// Build a structured triangulation with `ny` cell rows across the free-flow
/// subdomain.
pub fn build_structured(spec: &DomainSpec, ny: usize) -> Result<Mesh> {
    if ny == 0 {
        return Err(HdgError::InvalidParameter("ny must be at least 1".into()));
    }
    spec.validate()?;
    let (rs, rd) = (&spec.rect_s, &spec.rect_d);
    let width = rs.width();
    let nx = ((ny as f64 * width / rs.height()).round() as usize).max(1);
    let ny_d = ((ny as f64 * rd.height() / rs.height()).round() as usize).max(1);
    let xs: Vec<f64> = (0..=nx).map(|i| rs.x[0] + width * i as f64 / nx as f64).collect();

    let poly = spec.polyline();
    for p in &poly {
        let on_grid = xs.iter().any(|x| (x - p[0]).abs() <= 1e-10 * width);
        if !on_grid {
            return Err(HdgError::PolylineNotRepresentable(format!(
                "vertex x = {} is not a grid column for nx = {nx}",
                p[0]
            )));
        }
    }
    let y_interface: Vec<f64> = xs.iter().map(|&x| spec.interface_y(&poly, x)).collect();

    let row_len = nx + 1;
    let rows = ny_d + ny + 1;
    let mut vertices = Vec::with_capacity(row_len * rows);
    for j in 0..rows {
        for i in 0..=nx {
            let y = if j <= ny_d {
                let t = j as f64 / ny_d as f64;
                rd.y[0] + t * (y_interface[i] - rd.y[0])
            } else {
                let t = (j - ny_d) as f64 / ny as f64;
                y_interface[i] + t * (rs.y[1] - y_interface[i])
            };
            vertices.push([xs[i], y]);
        }
    }
    let node = |i: usize, j: usize| j * row_len + i;

    let mut tris: Vec<([usize; 3], Subdomain)> = Vec::with_capacity(2 * nx * (ny + ny_d));
    let mut push_quads = |j_range: std::ops::Range<usize>, sub: Subdomain| {
        for j in j_range {
            for i in 0..nx {
                let (a, b, c, d) = (node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
                if spec.splitting == Splitting::Alternating && (i + j) % 2 == 1 {
                    tris.push(([a, b, d], sub));
                    tris.push(([b, c, d], sub));
                } else {
                    tris.push(([a, b, c], sub));
                    tris.push(([a, c, d], sub));
                }
            }
        }
    };
    push_quads(ny_d..ny_d + ny, Subdomain::Stokes);
    push_quads(0..ny_d, Subdomain::Darcy);

    let mut mesh = assemble_topology(vertices, tris, spec)?;
    mesh.provenance = Some(Provenance {
        spec: spec.clone(),
        ny,
    });
    mesh.check_quality()?;
    Ok(mesh)
}

fn assemble_topology(vertices: Vec<[f64; 2]>, tris: Vec<([usize; 3], Subdomain)>, spec: &DomainSpec) -> Result<Mesh> {
    let mut cells = Vec::with_capacity(tris.len());
    let mut facets: Vec<Facet> = Vec::new();
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    for (c, (v, sub)) in tris.iter().enumerate() {
        let mut cf = [0usize; 3];
        let mut aligned = [true; 3];
        for e in 0..3 {
            let a = v[(e + 1) % 3];
            let b = v[(e + 2) % 3];
            let key = (a.min(b), a.max(b));
            aligned[e] = a < b;
            match edge_index.get(&key) {
                Some(&f) => {
                    facets[f].neighbor = Some((c, e));
                    cf[e] = f;
                }
                None => {
                    let f = facets.len();
                    facets.push(Facet {
                        vertices: [key.0, key.1],
                        owner: (c, e),
                        neighbor: None,
                        tag: FacetTag::InteriorS,
                    });
                    edge_index.insert(key, f);
                    cf[e] = f;
                }
            }
        }
        cells.push(Cell {
            vertices: *v,
            subdomain: *sub,
            facets: cf,
            aligned,
        });
    }

    let scale = spec.rect_s.width().max(spec.rect_s.height() + spec.rect_d.height());
    for f in facets.iter_mut() {
        let own = cells[f.owner.0].subdomain;
        f.tag = match f.neighbor {
            Some((n, _)) => match (own, cells[n].subdomain) {
                (Subdomain::Stokes, Subdomain::Stokes) => FacetTag::InteriorS,
                (Subdomain::Darcy, Subdomain::Darcy) => FacetTag::InteriorD,
                (Subdomain::Stokes, Subdomain::Darcy) => FacetTag::Interface,
                (Subdomain::Darcy, Subdomain::Stokes) => {
                    return Err(HdgError::InvalidDomain("interface facet owned by porous cell".into()))
                }
            },
            None => {
                let a = vertices[f.vertices[0]];
                let b = vertices[f.vertices[1]];
                let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                let mut hits = spec.boundary_tag_rules.iter().filter(|r| {
                    r.subdomain == own && {
                        let (pa, pb, pm) = match r.axis {
                            Axis::X => (a[0], b[0], m[0]),
                            Axis::Y => (a[1], b[1], m[1]),
                        };
                        let tol = 1e-10 * scale;
                        (pa - r.value).abs() <= tol && (pb - r.value).abs() <= tol && (pm - r.value).abs() <= tol
                    }
                });
                let first = hits.next();
                let second = hits.next();
                match (first, second) {
                    (Some(r), None) => r.tag,
                    (None, _) => {
                        return Err(HdgError::BoundaryTagging {
                            midpoint: m,
                            subdomain: own,
                            reason: "no tag rule covers this facet",
                        })
                    }
                    (Some(_), Some(_)) => {
                        return Err(HdgError::BoundaryTagging {
                            midpoint: m,
                            subdomain: own,
                            reason: "more than one tag rule covers this facet",
                        })
                    }
                }
            }
        };
    }

    let mut mesh = Mesh {
        vertices,
        cells,
        facets,
        h_cell: Vec::new(),
        h_max: 0.0,
        provenance: None,
    };
    mesh.h_cell = (0..mesh.cells.len()).map(|c| mesh.cell_diameter(c)).collect();
    mesh.h_max = mesh.h_cell.iter().cloned().fold(0.0, f64::max);

    let count = |t| mesh.facets.iter().filter(|f| f.tag == t).count();
    if count(FacetTag::GammaDD) == 0 || count(FacetTag::GammaDN) == 0 {
        return Err(HdgError::InvalidDomain(
            "porous boundary needs both pressure-data and flux-data parts".into(),
        ));
    }
    Ok(mesh)
}

impl Mesh {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    pub fn cell_coords(&self, c: usize) -> [[f64; 2]; 3] {
        let v = self.cells[c].vertices;
        [self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]]]
    }

    pub fn cell_map(&self, c: usize) -> AffineMap {
        AffineMap::from_vertices(self.cell_coords(c)).expect("mesh cells are positively oriented")
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let p = self.cell_coords(c);
        0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
    }

    fn cell_diameter(&self, c: usize) -> f64 {
        let p = self.cell_coords(c);
        (0..3)
            .map(|e| dist(p[(e + 1) % 3], p[(e + 2) % 3]))
            .fold(0.0, f64::max)
    }

    /// Outward unit normal and length of local facet `e` of cell `c`.
    pub fn local_facet_normal(&self, c: usize, e: usize) -> ([f64; 2], f64) {
        let p = self.cell_coords(c);
        let a = p[(e + 1) % 3];
        let b = p[(e + 2) % 3];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = (dx * dx + dy * dy).sqrt();
        ([dy / len, -dx / len], len)
    }

    pub fn facet_geometry(&self, f: usize) -> FacetGeometry {
        let facet = &self.facets[f];
        let (normal, length) = self.local_facet_normal(facet.owner.0, facet.owner.1);
        let neighbor_normal = facet.neighbor.map(|(c, e)| self.local_facet_normal(c, e).0);
        FacetGeometry {
            normal,
            neighbor_normal,
            length,
            endpoints: [self.vertices[facet.vertices[0]], self.vertices[facet.vertices[1]]],
        }
    }

    /// Point on facet `f` at canonical parameter `s in [0, 1]`.
    pub fn facet_point(&self, f: usize, s: f64) -> [f64; 2] {
        let [a, b] = self.facets[f].vertices.map(|v| self.vertices[v]);
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
    }

    pub fn facet_count(&self, tag: FacetTag) -> usize {
        self.facets.iter().filter(|f| f.tag == tag).count()
    }

    pub fn subdomain_area(&self, sub: Subdomain) -> f64 {
        (0..self.num_cells())
            .filter(|&c| self.cells[c].subdomain == sub)
            .map(|c| self.cell_area(c))
            .sum()
    }

    pub fn cells_in(&self, sub: Subdomain) -> impl Iterator<Item = usize> + '_ {
        (0..self.cells.len()).filter(move |&c| self.cells[c].subdomain == sub)
    }

    /// Ratio `h_K / (2 sqrt(3) r_K)`; 1 for an equilateral triangle.
    pub fn aspect_ratio(&self, c: usize) -> f64 {
        let p = self.cell_coords(c);
        let perimeter: f64 = (0..3).map(|e| dist(p[(e + 1) % 3], p[(e + 2) % 3])).sum();
        let inradius = 2.0 * self.cell_area(c) / perimeter;
        self.h_cell[c] / (2.0 * 3f64.sqrt() * inradius)
    }

    fn check_quality(&self) -> Result<()> {
        for c in 0..self.num_cells() {
            let area = self.cell_area(c);
            let h = self.h_cell[c];
            if !(area > 1e-14 * h * h) {
                return Err(HdgError::MeshQuality(format!(
                    "cell {c} is inverted or degenerate (area {area:e})"
                )));
            }
            let ar = self.aspect_ratio(c);
            if ar > MAX_ASPECT_RATIO {
                return Err(HdgError::MeshQuality(format!(
                    "cell {c} has aspect ratio {ar:.3} > {MAX_ASPECT_RATIO}"
                )));
            }
        }
        Ok(())
    }

    /// Uniform refinement of a structured mesh: twice as many rows and columns.
    pub fn refine(&self) -> Result<Mesh> {
        let prov = self.provenance.as_ref().ok_or(HdgError::NoProvenance)?;
        build_structured(&prov.spec, 2 * prov.ny)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Convenience wrapper over [`Mesh::refine`].
pub fn refine(mesh: &Mesh) -> Result<Mesh> {
    mesh.refine()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler_characteristic(mesh: &Mesh, sub: Subdomain) -> i64 {
        let cells: Vec<usize> = mesh.cells_in(sub).collect();
        let mut verts = std::collections::HashSet::new();
        let mut edges = std::collections::HashSet::new();
        for &c in &cells {
            for v in mesh.cells[c].vertices {
                verts.insert(v);
            }
            for f in mesh.cells[c].facets {
                edges.insert(f);
            }
        }
        verts.len() as i64 - edges.len() as i64 + cells.len() as i64
    }

    #[test]
    fn coarse_unit_mesh_counts() {
        let m = build_structured(&DomainSpec::manufactured(), 1).unwrap();
        assert_eq!(m.num_cells(), 8);
        assert_eq!(m.cells_in(Subdomain::Stokes).count(), 4);
        assert_eq!(m.facet_count(FacetTag::Interface), 2);
        let m4 = build_structured(&DomainSpec::manufactured(), 4).unwrap();
        assert_eq!(m4.num_cells(), 128);
        assert_eq!(m4.cells_in(Subdomain::Darcy).count(), 64);
    }

    #[test]
    fn euler_formula_per_subdomain() {
        for ny in [1, 2, 3, 5] {
            let m = build_structured(&DomainSpec::manufactured(), ny).unwrap();
            assert_eq!(euler_characteristic(&m, Subdomain::Stokes), 1);
            assert_eq!(euler_characteristic(&m, Subdomain::Darcy), 1);
        }
    }

    #[test]
    fn facets_are_consistent() {
        let m = build_structured(&DomainSpec::manufactured(), 3).unwrap();
        let mut refs = vec![0usize; m.num_facets()];
        for c in &m.cells {
            for f in c.facets {
                refs[f] += 1;
            }
        }
        for (f, facet) in m.facets.iter().enumerate() {
            let expected = if facet.tag.is_exterior() { 1 } else { 2 };
            assert_eq!(refs[f], expected, "facet {f} {:?}", facet.tag);
            if facet.tag == FacetTag::Interface {
                let n = facet.neighbor.unwrap().0;
                assert_eq!(m.cells[facet.owner.0].subdomain, Subdomain::Stokes);
                assert_eq!(m.cells[n].subdomain, Subdomain::Darcy);
            }
        }
    }

    #[test]
    fn splitting_sets_diagonal_directions() {
        // (rising, falling) diagonal counts.
        let diagonals = |splitting| {
            let spec = DomainSpec {
                splitting,
                ..DomainSpec::manufactured()
            };
            let m = build_structured(&spec, 2).unwrap();
            m.facets.iter().fold((0, 0), |(up, down), f| {
                let [a, b] = f.vertices.map(|v| m.vertices[v]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                match (dx.abs() > 1e-12 && dy.abs() > 1e-12, dx * dy > 0.0) {
                    (false, _) => (up, down),
                    (true, true) => (up + 1, down),
                    (true, false) => (up, down + 1),
                }
            })
        };
        assert_eq!(diagonals(Splitting::Uniform), (16, 0));
        assert_eq!(diagonals(Splitting::Alternating), (8, 8));
    }

    #[test]
    fn interface_normal_points_into_porous_region() {
        let m = build_structured(&DomainSpec::manufactured(), 2).unwrap();
        for (f, facet) in m.facets.iter().enumerate() {
            let g = m.facet_geometry(f);
            assert!(((g.normal[0].powi(2) + g.normal[1].powi(2)).sqrt() - 1.0).abs() < 1e-14);
            if let Some(nn) = g.neighbor_normal {
                assert!((nn[0] + g.normal[0]).abs() < 1e-14 && (nn[1] + g.normal[1]).abs() < 1e-14);
            }
            if facet.tag == FacetTag::Interface {
                assert!((g.normal[0]).abs() < 1e-14 && (g.normal[1] + 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn closed_cell_boundaries() {
        let m = build_structured(&DomainSpec::manufactured(), 3).unwrap();
        for c in 0..m.num_cells() {
            let mut s = [0.0; 2];
            for e in 0..3 {
                let (n, l) = m.local_facet_normal(c, e);
                s[0] += l * n[0];
                s[1] += l * n[1];
            }
            assert!(s[0].abs() < 1e-13 && s[1].abs() < 1e-13);
        }
    }

    #[test]
    fn refinement_quadruples_and_halves() {
        let m = build_structured(&DomainSpec::manufactured(), 4).unwrap();
        let r = m.refine().unwrap();
        assert_eq!(r.num_cells(), 512);
        assert!((r.h_max / m.h_max - 0.5).abs() < 1e-12);
        assert_eq!(r.facet_count(FacetTag::Interface), 2 * m.facet_count(FacetTag::Interface));
        for sub in [Subdomain::Stokes, Subdomain::Darcy] {
            let (a, b) = (m.subdomain_area(sub), r.subdomain_area(sub));
            assert!(((a - b) / a).abs() < 1e-12);
        }
    }

    #[test]
    fn tag_partition_manufactured() {
        let m = build_structured(&DomainSpec::manufactured(), 2).unwrap();
        // nx = 4, ny = 2: left 2 + top 4 velocity-data facets, right 2 stress facets
        assert_eq!(m.facet_count(FacetTag::GammaSD), 6);
        assert_eq!(m.facet_count(FacetTag::GammaSN), 2);
        assert_eq!(m.facet_count(FacetTag::GammaDD), 4);
        assert_eq!(m.facet_count(FacetTag::GammaDN), 4);
    }

    #[test]
    fn polyline_interface() {
        let mut spec = DomainSpec::unit_homogeneous();
        spec.interface_polyline = vec![[0.0, 0.0], [0.25, 0.05], [0.75, -0.05], [1.0, 0.0]];
        let m = build_structured(&spec, 4).unwrap();
        let total = m.subdomain_area(Subdomain::Stokes) + m.subdomain_area(Subdomain::Darcy);
        assert!((total - 1.0).abs() < 1e-12);
        assert!(build_structured(&spec, 1).is_err());
        let mut bad = spec.clone();
        bad.interface_polyline = vec![[0.0, 0.0], [0.5, 0.49], [1.0, 0.0]];
        assert!(build_structured(&bad, 2).is_err());
    }

    #[test]
    fn uncovered_boundary_is_rejected() {
        let mut spec = DomainSpec::manufactured();
        spec.boundary_tag_rules.retain(|r| r.tag != FacetTag::GammaSN);
        assert!(matches!(
            build_structured(&spec, 1),
            Err(HdgError::BoundaryTagging { .. })
        ));
    }
}

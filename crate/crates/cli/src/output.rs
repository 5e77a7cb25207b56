//! CSV tables, VTK snapshots and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hdg_core::diagnostics::{format_sci, ConservationReport};
use hdg_core::forms::PhysicalParams;
use hdg_core::mesh::{Mesh, Subdomain};
use hdg_core::spaces::{cell_velocity_at, State};
use hdg_core::stepper::Discretization;
use serde::Serialize;

use crate::error::CliError;

pub const CONSERVATION_HEADER: &str = "div_s,div_d,normal_jump,interface_mismatch,flux_balance";

/// The five conservation maxima, comma separated.
pub fn conservation_columns(c: &ConservationReport) -> String {
    [c.divergence_s, c.divergence_d, c.normal_jump, c.interface_mismatch, c.flux_balance]
        .map(format_sci)
        .join(",")
}

/// Collects files written into one output directory.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        fs::write(self.root.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub ny: usize,
    pub cells: usize,
    pub unknowns: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub meshes: Vec<MeshSummary>,
    pub wall_seconds: f64,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub passed: bool,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

/// Legacy ASCII unstructured grid. Velocity and pressure are sampled at the
/// centroid; permeability is 0 in free-flow cells.
pub fn vtk_snapshot(disc: &Discretization, state: &State, title: &str) -> String {
    let mesh = &disc.mesh;
    let n = mesh.num_cells();
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(out, "POINTS {} double", mesh.vertices.len());
    for v in &mesh.vertices {
        let _ = writeln!(out, "{:e} {:e} 0", v[0], v[1]);
    }
    let _ = writeln!(out, "CELLS {n} {}", 4 * n);
    for c in &mesh.cells {
        let [a, b, d] = c.vertices;
        let _ = writeln!(out, "3 {a} {b} {d}");
    }
    let _ = writeln!(out, "CELL_TYPES {n}");
    for _ in 0..n {
        out.push_str("5\n");
    }
    let centroids: Vec<[f64; 2]> = (0..n)
        .map(|c| {
            let x = mesh.cell_coords(c);
            [(x[0][0] + x[1][0] + x[2][0]) / 3.0, (x[0][1] + x[1][1] + x[2][1]) / 3.0]
        })
        .collect();
    let velocity: Vec<[f64; 2]> = (0..n)
        .map(|c| cell_velocity_at(mesh, &disc.dofs, &disc.re, &state.coeffs, c, centroids[c]))
        .collect();
    let _ = writeln!(out, "CELL_DATA {n}\nVECTORS velocity double");
    for u in &velocity {
        let _ = writeln!(out, "{:e} {:e} 0", u[0], u[1]);
    }
    let scalar = |out: &mut String, name: &str, values: &mut dyn Iterator<Item = f64>| {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in values {
            let _ = writeln!(out, "{v:e}");
        }
    };
    scalar(&mut out, "speed", &mut velocity.iter().map(|u| u[0].hypot(u[1])));
    let np = disc.dofs.np;
    scalar(
        &mut out,
        "pressure",
        &mut (0..n).map(|c| {
            let o = disc.dofs.cell_pressure(c);
            disc.re.pressure.expand_at(&state.coeffs[o..o + np], [1.0 / 3.0, 1.0 / 3.0])
        }),
    );
    scalar(&mut out, "permeability", &mut (0..n).map(|c| permeability(mesh, &disc.params, c)));
    scalar(
        &mut out,
        "subdomain",
        &mut mesh.cells.iter().map(|c| match c.subdomain {
            Subdomain::Stokes => 0.0,
            Subdomain::Darcy => 1.0,
        }),
    );
    out
}

fn permeability(mesh: &Mesh, params: &PhysicalParams, c: usize) -> f64 {
    match mesh.cells[c].subdomain {
        Subdomain::Stokes => 0.0,
        Subdomain::Darcy => params.kappa_at(c),
    }
}

//! One function per command. Each writes its tables into the output
//! directory and returns the mesh summaries and whether the gates passed.

use std::fmt::Write as _;

use hdg_core::diagnostics::{consistency_residual, format_sci, rate_table, ConservationReport, ErrorReport, RateAxis, RateTable};
use hdg_core::mesh::{build_structured, DomainSpec, Mesh};
use hdg_core::scenarios::{KappaSpec, Scenario};
use hdg_core::solver::{coercivity_spectrum, infsup_probe, Assembler, PROBE_CELL_LIMIT};
use hdg_core::spaces::{build_dofs, BcMode};
use hdg_core::stepper::{run, run_observed, spatial_study, temporal_study, Discretization, RunOptions, StepRule, StudyLevel, TimeGrid};
use hdg_core::HdgError;

use crate::config::{Command, GateConfig, KappaSetting, RunConfig};
use crate::error::CliError;
use crate::output::{conservation_columns, vtk_snapshot, MeshSummary, OutputDir, CONSERVATION_HEADER};

/// Conservation tolerance used when the configuration sets none.
pub const DEFAULT_CONSERVATION_TOL: f64 = 1e-9;
/// Tolerance of the polynomial patch test.
pub const PATCH_TOL: f64 = 1e-9;
/// Largest relative change of the inf-sup constant between the probe meshes.
pub const INFSUP_VARIATION: f64 = 0.2;

pub struct Outcome {
    pub meshes: Vec<MeshSummary>,
    /// Gate failures, one message each.
    pub violations: Vec<String>,
}

pub fn execute(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::SpatialStudy => run_spatial_study(cfg, out),
        Command::TemporalStudy => run_temporal_study(cfg, out),
        Command::Subsurface => run_subsurface(cfg, out),
        Command::Invariants => run_invariants(cfg, out),
        Command::Probe => run_probe(cfg, out),
    }
}

/// Geometry comes from the configuration, so a mesh that cannot be built is
/// a configuration error rather than a solver failure.
fn build_mesh(spec: &DomainSpec, ny: usize) -> Result<Mesh, CliError> {
    build_structured(spec, ny).map_err(|e| match e {
        HdgError::InvalidDomain(_)
        | HdgError::PolylineNotRepresentable(_)
        | HdgError::MeshQuality(_)
        | HdgError::BoundaryTagging { .. } => CliError::Config(format!("mesh with {ny} rows: {e}")),
        other => CliError::Solver(other),
    })
}

fn summary(disc: &Discretization, ny: usize) -> MeshSummary {
    MeshSummary {
        ny,
        cells: disc.mesh.num_cells(),
        unknowns: disc.dofs.n_free,
    }
}

fn manufactured(cfg: &RunConfig) -> Scenario {
    let kappa = match cfg.kappa {
        KappaSetting::Constant(v) => v,
        KappaSetting::Random { .. } => unreachable!("validation requires a constant kappa"),
    };
    let mut s = Scenario::manufactured(cfg.mu, kappa, cfg.alpha);
    s.beta = cfg.beta;
    s.domain.splitting = cfg.splitting;
    s
}

fn study_meshes(scenario: &Scenario, k: usize, levels: &[StudyLevel]) -> Result<Vec<MeshSummary>, CliError> {
    levels
        .iter()
        .map(|l| {
            let disc = Discretization::new(scenario, build_mesh(&scenario.domain, l.ny)?, k)?;
            Ok(summary(&disc, l.ny))
        })
        .collect()
}

fn conservation_tol(gate: Option<&GateConfig>) -> f64 {
    gate.and_then(|g| g.conservation).unwrap_or(DEFAULT_CONSERVATION_TOL)
}

fn check_conservation(c: Option<ConservationReport>, tol: f64, what: &str, violations: &mut Vec<String>) {
    if let Some(c) = c {
        if !c.passes(tol) {
            violations.push(format!(
                "{what}: conservation defect {:e} / flux balance {:e} above {tol:e}",
                c.max_pointwise(),
                c.flux_balance
            ));
        }
    }
}

fn check_rates(table: &RateTable, gate: Option<&GateConfig>, violations: &mut Vec<String>) {
    let (Some(g), Some(rates)) = (gate, table.last_rates()) else {
        return;
    };
    for (name, range, r) in [
        ("energy", g.energy_rate, rates[0]),
        ("velocity L2", g.velocity_rate, rates[1]),
        ("pressure L2", g.pressure_rate, rates[2]),
    ] {
        if let Some([lo, hi]) = range {
            if !(lo..=hi).contains(&r) {
                violations.push(format!("{name} rate {r:.2} outside [{lo}, {hi}]"));
            }
        }
    }
}

fn study_conservation_csv(levels: &[StudyLevel]) -> String {
    let mut csv = format!("ny,steps,{CONSERVATION_HEADER},seconds\n");
    for l in levels {
        let cols = l.conservation.map(|c| conservation_columns(&c)).unwrap_or_else(|| ",,,,".into());
        let _ = writeln!(csv, "{},{},{cols},{:.3}", l.ny, l.steps, l.seconds);
    }
    csv
}

fn finish_study(
    cfg: &RunConfig,
    scenario: &Scenario,
    levels: Vec<StudyLevel>,
    axis: RateAxis,
    table_name: &str,
    out: &mut OutputDir,
) -> Result<Outcome, CliError> {
    let reports: Vec<ErrorReport> = levels.iter().map(|l| l.errors).collect();
    let table = rate_table(&reports, axis)?;
    out.write(table_name, &table.to_csv())?;
    out.write("conservation.csv", &study_conservation_csv(&levels))?;
    let mut violations = Vec::new();
    check_rates(&table, cfg.gate.as_ref(), &mut violations);
    let tol = conservation_tol(cfg.gate.as_ref());
    for l in &levels {
        check_conservation(l.conservation, tol, &format!("ny={} N={}", l.ny, l.steps), &mut violations);
    }
    Ok(Outcome {
        meshes: study_meshes(scenario, cfg.k, &levels)?,
        violations,
    })
}

pub fn run_spatial_study(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scenario = manufactured(cfg);
    for &ny in &cfg.levels {
        build_mesh(&scenario.domain, ny)?;
    }
    let time = cfg.time()?;
    let rule = match (&time.steps, time.dt) {
        (Some(n), _) => StepRule::Steps(n.as_slice()[0]),
        (None, Some(r)) => StepRule::MeshScaled { factor: r.factor },
        (None, None) => unreachable!("validated"),
    };
    log::info!("spatial study: k={} levels={:?} T={}", cfg.k, cfg.levels, time.t_final);
    let levels = spatial_study(&scenario, cfg.k, &cfg.levels, time.t_final, rule, RunOptions::default())?;
    for l in &levels {
        log::info!("ny={} N={} e_u_E={:e} ({:.1} s)", l.ny, l.steps, l.errors.e_u_energy, l.seconds);
    }
    finish_study(cfg, &scenario, levels, RateAxis::MeshSize, "spatial_rates.csv", out)
}

pub fn run_temporal_study(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scenario = manufactured(cfg);
    let ny = cfg.levels[0];
    build_mesh(&scenario.domain, ny)?;
    let time = cfg.time()?;
    let steps = time.steps.as_ref().expect("validated").as_slice();
    log::info!("temporal study: k={} ny={ny} N={steps:?} T={}", cfg.k, time.t_final);
    let levels = temporal_study(&scenario, cfg.k, ny, time.t_final, steps, RunOptions::default())?;
    for l in &levels {
        log::info!("N={} e_u_E={:e} ({:.1} s)", l.steps, l.errors.e_u_energy, l.seconds);
    }
    finish_study(cfg, &scenario, levels, RateAxis::TimeStep, "temporal_rates.csv", out)
}

pub fn run_subsurface(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let polyline = cfg.polyline()?.unwrap_or_else(Scenario::default_subsurface_polyline);
    let seed = match cfg.kappa {
        KappaSetting::Random { seed } => seed,
        KappaSetting::Constant(_) => 0,
    };
    let mut scenario = Scenario::subsurface(cfg.mu, cfg.alpha, seed, polyline);
    if let KappaSetting::Constant(v) = cfg.kappa {
        scenario.kappa = KappaSpec::Constant(v);
    }
    scenario.beta = cfg.beta;
    scenario.domain.splitting = cfg.splitting;
    let ny = cfg.levels[0];
    let mesh = build_mesh(&scenario.domain, ny)?;
    let time = cfg.time()?;
    let grid = match (&time.steps, time.dt) {
        (Some(n), _) => TimeGrid::new(time.t_final, n.as_slice()[0])?,
        (None, Some(r)) => TimeGrid::scaled_to_mesh(time.t_final, mesh.h_max, cfg.k, r.factor)?,
        (None, None) => unreachable!("validated"),
    };
    let disc = Discretization::new(&scenario, mesh, cfg.k)?;
    log::info!(
        "subsurface: {} cells, {} unknowns, {} steps of {}",
        disc.mesh.num_cells(),
        disc.dofs.n_free,
        grid.steps,
        grid.dt
    );
    let mut snapshots = Vec::new();
    let stride = cfg.vtk_every;
    let traj = run_observed(&scenario, &disc, &grid, RunOptions::default(), |n, state| {
        if stride > 0 && n % stride == 0 {
            snapshots.push((n, vtk_snapshot(&disc, state, &format!("t={}", state.time))));
        }
        if n > 0 && n % 100 == 0 {
            log::info!("step {n}/{}", grid.steps);
        }
        Ok(())
    })?;
    for (n, text) in &snapshots {
        out.write(&format!("snapshot_{n:06}.vtk"), text)?;
    }
    let mut csv = format!("step,time,{CONSERVATION_HEADER}\n");
    let tol = conservation_tol(cfg.gate.as_ref());
    let mut violations = Vec::new();
    for r in &traj.records {
        let c = r.conservation.expect("conservation recorded");
        let _ = writeln!(csv, "{},{},{}", r.step, format_sci(r.time), conservation_columns(&c));
        check_conservation(Some(c), tol, &format!("step {}", r.step), &mut violations);
    }
    out.write("mass_balance.csv", &csv)?;
    Ok(Outcome {
        meshes: vec![summary(&disc, ny)],
        violations,
    })
}

struct Check {
    name: String,
    value: f64,
    threshold: String,
    pass: bool,
}

/// Patch test, consistency, conservation, inf-sup and coercivity on the
/// configured parameters.
pub fn run_invariants(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut checks = Vec::new();
    let kappa = match cfg.kappa {
        KappaSetting::Constant(v) => v,
        KappaSetting::Random { .. } => unreachable!("validated"),
    };
    let time = cfg.time()?;
    let coarse = cfg.levels[0];

    let mut patch = Scenario::polynomial_patch(cfg.k, cfg.mu, kappa, cfg.alpha);
    patch.beta = cfg.beta;
    patch.domain.splitting = cfg.splitting;
    let disc = Discretization::new(&patch, build_mesh(&patch.domain, coarse)?, cfg.k)?;
    let opts = RunOptions {
        errors: true,
        ..RunOptions::default()
    };
    let traj = run(&patch, &disc, &TimeGrid::new(time.t_final, 3)?, opts)?;
    let worst = traj
        .records
        .iter()
        .filter_map(|r| r.errors)
        .map(|e| e.e_u_energy.max(e.e_u_l2).max(e.e_p_l2))
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "patch_test".into(),
        value: worst,
        threshold: format!("<= {}", format_sci(PATCH_TOL)),
        pass: worst <= PATCH_TOL,
    });

    let scenario = manufactured(cfg);
    let exact = scenario.exact.clone().expect("manufactured scenario has an exact solution");
    let mut previous = f64::INFINITY;
    let mut meshes = Vec::new();
    for &ny in &cfg.levels {
        let disc = Discretization::new(&scenario, build_mesh(&scenario.domain, ny)?, cfg.k)?;
        let asm = Assembler::new(disc.context(&scenario))?;
        let r = consistency_residual(&asm, exact.as_ref(), time.t_final)?;
        checks.push(Check {
            name: format!("consistency_ny{ny}"),
            value: r,
            threshold: if previous.is_finite() { format!("< {}", format_sci(previous)) } else { String::new() },
            pass: r < previous,
        });
        previous = r;
        meshes.push(summary(&disc, ny));
    }

    let disc = Discretization::new(&scenario, build_mesh(&scenario.domain, coarse)?, cfg.k)?;
    let grid = match (&time.steps, time.dt) {
        (Some(n), _) => TimeGrid::new(time.t_final, n.as_slice()[0])?,
        (None, Some(r)) => TimeGrid::scaled_to_mesh(time.t_final, disc.mesh.h_max, cfg.k, r.factor)?,
        (None, None) => unreachable!("validated"),
    };
    let worst = run(&scenario, &disc, &grid, RunOptions::default())?
        .worst_conservation()
        .map(|c| c.max_pointwise().max(c.flux_balance))
        .unwrap_or(0.0);
    let tol = conservation_tol(cfg.gate.as_ref());
    checks.push(Check {
        name: "conservation".into(),
        value: worst,
        threshold: format!("<= {}", format_sci(tol)),
        pass: worst <= tol,
    });

    let probe = |ny: usize| -> Result<(f64, f64), CliError> {
        let mesh = build_mesh(&scenario.domain, ny)?;
        let dofs = build_dofs(&mesh, cfg.k, BcMode::Inhomogeneous)?;
        let params = scenario.physical_params(&mesh, cfg.k);
        Ok((infsup_probe(&mesh, &dofs, &params)?, coercivity_spectrum(&mesh, &dofs, &params)?[0]))
    };
    let mut infsup = Vec::new();
    for ny in [1, 2, 4] {
        let (beta_h, lambda) = probe(ny)?;
        checks.push(Check {
            name: format!("coercivity_ny{ny}"),
            value: lambda,
            threshold: "> 0".into(),
            pass: lambda > 0.0,
        });
        if ny > 1 {
            checks.push(Check {
                name: format!("infsup_ny{ny}"),
                value: beta_h,
                threshold: "> 0".into(),
                pass: beta_h > 0.0,
            });
            infsup.push(beta_h);
        }
    }
    let variation = (infsup[0] - infsup[1]).abs() / infsup[0].max(infsup[1]);
    checks.push(Check {
        name: "infsup_variation".into(),
        value: variation,
        threshold: format!("< {INFSUP_VARIATION}"),
        pass: variation < INFSUP_VARIATION,
    });

    let mut csv = String::from("check,value,threshold,pass\n");
    let mut violations = Vec::new();
    for c in &checks {
        let _ = writeln!(csv, "{},{},{},{}", c.name, format_sci(c.value), c.threshold, c.pass);
        if !c.pass {
            violations.push(format!("{} = {:e} ({})", c.name, c.value, c.threshold));
        }
    }
    out.write("invariants.csv", &csv)?;
    Ok(Outcome { meshes, violations })
}

/// Inf-sup constant and smallest coercivity eigenvalue on each level.
pub fn run_probe(cfg: &RunConfig, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scenario = match cfg.kappa {
        KappaSetting::Constant(_) => manufactured(cfg),
        KappaSetting::Random { seed } => {
            let mut s = Scenario::manufactured(cfg.mu, 1.0, cfg.alpha);
            s.kappa = KappaSpec::Random { seed };
            s.beta = cfg.beta;
            s.domain.splitting = cfg.splitting;
            s
        }
    };
    let mut csv = String::from("ny,cells,infsup,coercivity_min\n");
    let mut meshes = Vec::new();
    let mut violations = Vec::new();
    for &ny in &cfg.levels {
        let mesh = build_mesh(&scenario.domain, ny)?;
        if mesh.num_cells() > PROBE_CELL_LIMIT {
            return Err(CliError::Config(format!(
                "probe level ny={ny} has {} cells; dense probes allow at most {PROBE_CELL_LIMIT}",
                mesh.num_cells()
            )));
        }
        let dofs = build_dofs(&mesh, cfg.k, BcMode::Inhomogeneous)?;
        let params = scenario.physical_params(&mesh, cfg.k);
        let beta_h = infsup_probe(&mesh, &dofs, &params)?;
        let lambda = coercivity_spectrum(&mesh, &dofs, &params)?[0];
        let _ = writeln!(csv, "{ny},{},{},{}", mesh.num_cells(), format_sci(beta_h), format_sci(lambda));
        if lambda <= 0.0 {
            violations.push(format!("ny={ny}: velocity form not coercive (smallest eigenvalue {lambda:e})"));
        }
        meshes.push(MeshSummary {
            ny,
            cells: mesh.num_cells(),
            unknowns: dofs.n_free,
        });
    }
    out.write("probe.csv", &csv)?;
    Ok(Outcome { meshes, violations })
}

//! Backward Euler time loop with lagged convection, and the stationary
//! coupled solve that supplies initial data.

use crate::diagnostics::{compute_errors, conservation_report, pressure_velocity_ratio, ConservationReport, ErrorReport};
use crate::error::{HdgError, Result};
use crate::femlib::ReferenceElement;
use crate::forms::{FormContext, PhysicalParams, StepInput};
use crate::mesh::{Mesh, Subdomain};
use crate::scenarios::{InitialMode, Scenario};
use crate::solver::{constrained_values, expand_solution, Assembler, CondensedAssembler, DirectSolver};
use crate::spaces::{build_dofs, interpolate_stokes_velocity, DofSystem, State};

/// Uniform partition of `[0, t_final]` into `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_final.is_finite() && t_final > 0.0) {
            return Err(HdgError::InvalidParameter(format!(
                "time grid needs T > 0 and N >= 1 (got T = {t_final}, N = {steps})"
            )));
        }
        Ok(Self {
            t_final,
            steps,
            dt: t_final / steps as f64,
        })
    }

    /// Smallest `N` with `T / N <= dt_max`.
    pub fn with_max_step(t_final: f64, dt_max: f64) -> Result<Self> {
        if !(dt_max.is_finite() && dt_max > 0.0) {
            return Err(HdgError::InvalidParameter(format!("time step bound must be positive (got {dt_max})")));
        }
        let steps = (t_final / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::new(t_final, steps)
    }

    /// `dt <= factor * h^(k+1)`.
    pub fn scaled_to_mesh(t_final: f64, h: f64, k: usize, factor: f64) -> Result<Self> {
        Self::with_max_step(t_final, factor * h.powi(k as i32 + 1))
    }

    pub fn time(&self, n: usize) -> f64 {
        if n == self.steps {
            self.t_final
        } else {
            n as f64 * self.dt
        }
    }
}

/// How the linear system of each solve is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStrategy {
    /// Cell and trace unknowns together.
    Monolithic,
    /// Cell unknowns eliminated element by element; only traces are factorized.
    Condensed,
}

enum Backend<'a> {
    Monolithic(Assembler<'a>),
    Condensed(CondensedAssembler<'a>),
}

/// Cached assembly pattern and factorization for repeated solves on one
/// discretization.
pub struct Stepper<'a> {
    ctx: FormContext<'a>,
    backend: Backend<'a>,
    solver: DirectSolver,
}

impl<'a> Stepper<'a> {
    pub fn new(ctx: FormContext<'a>) -> Result<Self> {
        Self::with_strategy(ctx, SolveStrategy::Condensed)
    }

    pub fn with_strategy(ctx: FormContext<'a>, strategy: SolveStrategy) -> Result<Self> {
        let backend = match strategy {
            SolveStrategy::Monolithic => Backend::Monolithic(Assembler::new(ctx)?),
            SolveStrategy::Condensed => Backend::Condensed(CondensedAssembler::new(ctx)?),
        };
        Ok(Self {
            ctx,
            backend,
            solver: DirectSolver::reusing(),
        })
    }

    pub fn context(&self) -> &FormContext<'a> {
        &self.ctx
    }

    /// Numeric factorizations computed so far.
    pub fn factorizations(&self) -> usize {
        self.solver.factorizations()
    }

    fn solve_with(&mut self, input: &StepInput, t: f64) -> Result<State> {
        let ctx = self.ctx;
        let cv = constrained_values(ctx.mesh, ctx.dofs, ctx.re, ctx.data, t)?;
        let coeffs = match &self.backend {
            Backend::Monolithic(asm) => {
                let sys = asm.assemble(input, &cv);
                let x = self.solver.solve(&sys)?;
                expand_solution(ctx.dofs, &x, &cv)
            }
            Backend::Condensed(asm) => {
                let sys = asm.assemble(input, &cv)?;
                let x = self.solver.solve(&sys.system)?;
                asm.recover(&sys, &x, &cv)
            }
        };
        Ok(State { coeffs, time: t })
    }

    /// Stationary coupled Stokes-Darcy solve at `t0`.
    pub fn solve_stationary(&mut self, t0: f64) -> Result<State> {
        self.solve_with(&StepInput::stationary(t0), t0)
    }

    /// One backward Euler step of size `dt` from `state`.
    pub fn step(&mut self, state: &State, dt: f64) -> Result<State> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(HdgError::InvalidParameter(format!("time step must be positive (got {dt})")));
        }
        let t = state.time + dt;
        self.solve_with(&StepInput::step(t, dt, &state.coeffs), t)
    }

    /// Initial state at `t0`: the stationary solution or the H(div)
    /// interpolant of the data's initial velocity (other unknowns zero).
    pub fn initial_state(&mut self, mode: InitialMode, t0: f64) -> Result<State> {
        match mode {
            InitialMode::StationarySolve => self.solve_stationary(t0),
            InitialMode::Interpolate => {
                let ctx = self.ctx;
                let mut s = State::zeros(ctx.dofs, t0);
                interpolate_stokes_velocity(ctx.mesh, ctx.dofs, ctx.re, &mut s, |x| ctx.data.initial_velocity(x))?;
                Ok(s)
            }
        }
    }

    /// March `grid.steps` steps from `initial`, calling `observe(n, state)`
    /// after every step (`n = 1..=N`).
    pub fn run(&mut self, initial: State, grid: &TimeGrid, mut observe: impl FnMut(usize, &State) -> Result<()>) -> Result<State> {
        let mut state = initial;
        for n in 1..=grid.steps {
            let t_prev = grid.time(n - 1);
            let dt = grid.time(n) - t_prev;
            state.time = t_prev;
            state = self.step(&state, dt)?;
            observe(n, &state)?;
        }
        Ok(state)
    }
}

/// Which diagnostics a scenario run records at every time level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub conservation: bool,
    pub errors: bool,
    pub pressure_velocity_ratio: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            conservation: true,
            errors: false,
            pressure_velocity_ratio: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub conservation: Option<ConservationReport>,
    pub errors: Option<ErrorReport>,
    pub pressure_velocity_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: State,
    pub final_state: State,
    /// One record per time level, starting with the initial state (`step = 0`).
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    /// Largest pointwise conservation defect over all recorded levels.
    pub fn worst_conservation(&self) -> Option<ConservationReport> {
        self.records
            .iter()
            .filter_map(|r| r.conservation)
            .max_by(|a, b| a.max_pointwise().max(a.flux_balance).total_cmp(&b.max_pointwise().max(b.flux_balance)))
    }

    pub fn final_errors(&self) -> Option<ErrorReport> {
        self.records.last().and_then(|r| r.errors)
    }
}

/// Everything a scenario run owns for one mesh and degree.
pub struct Discretization {
    pub mesh: Mesh,
    pub dofs: DofSystem,
    pub re: ReferenceElement,
    pub params: PhysicalParams,
}

impl Discretization {
    pub fn new(scenario: &Scenario, mesh: Mesh, k: usize) -> Result<Self> {
        let dofs = build_dofs(&mesh, k, scenario.bc_mode)?;
        let re = ReferenceElement::new(k)?;
        let params = scenario.physical_params(&mesh, k);
        params.validate(&mesh)?;
        Ok(Self { mesh, dofs, re, params })
    }

    pub fn context<'a>(&'a self, scenario: &'a Scenario) -> FormContext<'a> {
        FormContext {
            mesh: &self.mesh,
            dofs: &self.dofs,
            re: &self.re,
            params: &self.params,
            data: scenario.data.as_ref(),
        }
    }
}

fn record(disc: &Discretization, scenario: &Scenario, opts: RunOptions, step: usize, state: &State, dt: Option<f64>) -> Result<StepRecord> {
    let conservation = if opts.conservation {
        Some(conservation_report(&disc.mesh, &disc.dofs, &disc.re, scenario.data.as_ref(), &state.coeffs, state.time)?)
    } else {
        None
    };
    let errors = match (&scenario.exact, opts.errors) {
        (Some(exact), true) => {
            let mut e = compute_errors(&disc.mesh, &disc.dofs, &state.coeffs, exact.as_ref(), state.time)?;
            e.dt = dt;
            Some(e)
        }
        (None, true) => return Err(HdgError::NoExactSolution),
        _ => None,
    };
    let pressure_velocity_ratio = if opts.pressure_velocity_ratio {
        pressure_velocity_ratio(&disc.mesh, &disc.dofs, &disc.re, &disc.params, &state.coeffs)
    } else {
        None
    };
    Ok(StepRecord {
        step,
        time: state.time,
        conservation,
        errors,
        pressure_velocity_ratio,
    })
}

/// Run `scenario` on `disc` over `grid`, starting from the scenario's initial mode.
pub fn run(scenario: &Scenario, disc: &Discretization, grid: &TimeGrid, opts: RunOptions) -> Result<Trajectory> {
    run_observed(scenario, disc, grid, opts, |_, _| Ok(()))
}

/// As [`run`], with a callback after every step (for snapshots).
pub fn run_observed(
    scenario: &Scenario,
    disc: &Discretization,
    grid: &TimeGrid,
    opts: RunOptions,
    mut observe: impl FnMut(usize, &State) -> Result<()>,
) -> Result<Trajectory> {
    let mut stepper = Stepper::new(disc.context(scenario))?;
    let initial = stepper.initial_state(scenario.initial_mode, 0.0)?;
    observe(0, &initial)?;
    let mut records = vec![record(disc, scenario, opts, 0, &initial, Some(grid.dt))?];
    let final_state = stepper.run(initial.clone(), grid, |n, s| {
        records.push(record(disc, scenario, opts, n, s, Some(grid.dt))?);
        observe(n, s)
    })?;
    Ok(Trajectory {
        initial,
        final_state,
        records,
    })
}

/// How a study picks the time step on each mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Fixed number of steps.
    Steps(usize),
    /// `dt <= factor * h^(k+1)` with `h` the largest cell diameter.
    MeshScaled { factor: f64 },
}

impl StepRule {
    pub fn grid(self, t_final: f64, mesh: &Mesh, k: usize) -> Result<TimeGrid> {
        match self {
            StepRule::Steps(n) => TimeGrid::new(t_final, n),
            StepRule::MeshScaled { factor } => TimeGrid::scaled_to_mesh(t_final, mesh.h_max, k, factor),
        }
    }
}

/// Outcome of one run of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyLevel {
    pub ny: usize,
    pub steps: usize,
    /// Errors at the final time.
    pub errors: ErrorReport,
    /// Worst conservation defect over all time levels.
    pub conservation: Option<ConservationReport>,
    pub seconds: f64,
}

fn study_level(scenario: &Scenario, k: usize, ny: usize, grid: &TimeGrid, opts: RunOptions) -> Result<StudyLevel> {
    let exact = scenario.exact.clone().ok_or(HdgError::NoExactSolution)?;
    let start = std::time::Instant::now();
    let mesh = crate::mesh::build_structured(&scenario.domain, ny)?;
    let disc = Discretization::new(scenario, mesh, k)?;
    let traj = run(
        scenario,
        &disc,
        grid,
        RunOptions {
            errors: false,
            ..opts
        },
    )?;
    let s = &traj.final_state;
    let mut errors = compute_errors(&disc.mesh, &disc.dofs, &s.coeffs, exact.as_ref(), s.time)?;
    errors.dt = Some(grid.dt);
    Ok(StudyLevel {
        ny,
        steps: grid.steps,
        errors,
        conservation: traj.worst_conservation(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Final-time errors on a sequence of meshes (`ny` rows in the free-flow
/// region), each run with its own time grid from `rule`.
pub fn spatial_study(scenario: &Scenario, k: usize, levels: &[usize], t_final: f64, rule: StepRule, opts: RunOptions) -> Result<Vec<StudyLevel>> {
    levels
        .iter()
        .map(|&ny| {
            let mesh = crate::mesh::build_structured(&scenario.domain, ny)?;
            let grid = rule.grid(t_final, &mesh, k)?;
            study_level(scenario, k, ny, &grid, opts)
        })
        .collect()
}

/// Final-time errors on one mesh for a sequence of step counts.
pub fn temporal_study(scenario: &Scenario, k: usize, ny: usize, t_final: f64, steps: &[usize], opts: RunOptions) -> Result<Vec<StudyLevel>> {
    steps
        .iter()
        .map(|&n| study_level(scenario, k, ny, &TimeGrid::new(t_final, n)?, opts))
        .collect()
}

/// `||u_h||_{Omega^s}` of a state.
pub fn stokes_velocity_norm(disc: &Discretization, state: &State) -> f64 {
    let (re, dofs) = (&disc.re, &disc.dofs);
    let nv = re.nv();
    let mut s = 0.0;
    for c in disc.mesh.cells_in(Subdomain::Stokes) {
        let map = disc.mesh.cell_map(c);
        let o = dofs.cell_velocity(c);
        for (q, w) in re.cell_rule.weights.iter().enumerate() {
            let phi = &re.vel_vals[q * nv..(q + 1) * nv];
            for a in 0..2 {
                let u: f64 = (0..nv).map(|i| state.coeffs[o + a * nv + i] * phi[i]).sum();
                s += w * map.det * u * u;
            }
        }
    }
    s.sqrt()
}

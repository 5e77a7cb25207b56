//! Properties of the backward Euler march: trivial solutions, energy decay,
//! steady states, conservation after every step and solver-path agreement.

use hdg_core::diagnostics::compute_errors;
use hdg_core::mesh::build_structured;
use hdg_core::scenarios::Scenario;
use hdg_core::spaces::State;
use hdg_core::stepper::{run, stokes_velocity_norm, Discretization, RunOptions, SolveStrategy, Stepper, TimeGrid};

/// Divergence-free field vanishing on the unit-width free-flow boundary.
fn swirl(x: [f64; 2]) -> [f64; 2] {
    let s = |v: f64| v * v * (1.0 - v) * (1.0 - v);
    let ds = |v: f64| 2.0 * v * (1.0 - v) * (1.0 - 2.0 * v);
    let y = 2.0 * x[1];
    [s(x[0]) * 2.0 * ds(y), -ds(x[0]) * s(y)]
}

#[test]
fn zero_data_keep_zero_state() {
    let scenario = Scenario::homogeneous(0.1, 1e-2, 1.0, |_| [0.0; 2]);
    let mesh = build_structured(&scenario.domain, 2).unwrap();
    let disc = Discretization::new(&scenario, mesh, 2).unwrap();
    let grid = TimeGrid::new(0.1, 4).unwrap();
    let traj = run(&scenario, &disc, &grid, RunOptions::default()).unwrap();
    assert!(traj.final_state.coeffs.iter().all(|&v| v == 0.0));
}

#[test]
fn kinetic_energy_decays_without_forcing() {
    let scenario = Scenario::homogeneous(1e-2, 1e-2, 1.0, swirl);
    let mesh = build_structured(&scenario.domain, 4).unwrap();
    let disc = Discretization::new(&scenario, mesh, 2).unwrap();
    let mut stepper = Stepper::new(disc.context(&scenario)).unwrap();
    let mut state = stepper.initial_state(scenario.initial_mode, 0.0).unwrap();
    let mut energy = stokes_velocity_norm(&disc, &state);
    assert!(energy > 1e-3);
    for _ in 0..10 {
        state = stepper.step(&state, 0.05).unwrap();
        let next = stokes_velocity_norm(&disc, &state);
        assert!(next <= energy * (1.0 + 1e-12), "{next} > {energy}");
        energy = next;
    }
}

#[test]
fn steady_polynomial_solution_is_a_fixed_point() {
    for k in [1, 2] {
        let scenario = Scenario::polynomial_patch(k, 0.5, 0.2, 1.0);
        let mesh = build_structured(&scenario.domain, 2).unwrap();
        let disc = Discretization::new(&scenario, mesh, k).unwrap();
        let grid = TimeGrid::new(0.3, 3).unwrap();
        let opts = RunOptions {
            errors: true,
            ..RunOptions::default()
        };
        let traj = run(&scenario, &disc, &grid, opts).unwrap();
        for rec in &traj.records {
            let e = rec.errors.unwrap();
            assert!(e.e_u_energy < 1e-9 && e.e_p_l2 < 1e-9, "k={k} step {}: {e:?}", rec.step);
        }
    }
}

#[test]
fn conservation_holds_after_every_step() {
    let scenario = Scenario::manufactured(1e-2, 1e-3, 1.0);
    let mesh = build_structured(&scenario.domain, 4).unwrap();
    let disc = Discretization::new(&scenario, mesh, 2).unwrap();
    let grid = TimeGrid::new(0.05, 5).unwrap();
    let traj = run(&scenario, &disc, &grid, RunOptions::default()).unwrap();
    assert_eq!(traj.records.len(), 6);
    for rec in &traj.records {
        let c = rec.conservation.unwrap();
        assert!(c.max_pointwise() <= 1e-9 && c.flux_balance <= 1e-9, "step {}: {c:?}", rec.step);
    }
}

#[test]
fn condensed_and_monolithic_paths_agree() {
    let scenario = Scenario::manufactured(1e-2, 1e-3, 1.0);
    let mesh = build_structured(&scenario.domain, 2).unwrap();
    let disc = Discretization::new(&scenario, mesh, 2).unwrap();
    let march = |strategy| {
        let mut s = Stepper::with_strategy(disc.context(&scenario), strategy).unwrap();
        let mut state: State = s.initial_state(scenario.initial_mode, 0.0).unwrap();
        for _ in 0..3 {
            state = s.step(&state, 0.02).unwrap();
        }
        state.coeffs
    };
    let a = march(SolveStrategy::Condensed);
    let b = march(SolveStrategy::Monolithic);
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-8 * scale, "{diff} vs scale {scale}");
}

#[test]
fn factorization_is_reused_across_small_steps() {
    let scenario = Scenario::manufactured(1e-2, 1e-3, 1.0);
    let mesh = build_structured(&scenario.domain, 4).unwrap();
    let disc = Discretization::new(&scenario, mesh, 1).unwrap();
    let mut stepper = Stepper::new(disc.context(&scenario)).unwrap();
    let initial = stepper.initial_state(scenario.initial_mode, 0.0).unwrap();
    let grid = TimeGrid::new(0.01, 20).unwrap();
    let last = stepper.run(initial, &grid, |_, _| Ok(())).unwrap();
    assert!(stepper.factorizations() < 10, "{}", stepper.factorizations());
    let e = compute_errors(&disc.mesh, &disc.dofs, &last.coeffs, scenario.exact.as_ref().unwrap().as_ref(), last.time).unwrap();
    assert!(e.e_u_l2 < 5e-2, "{e:?}");
}

#[test]
fn rejects_nonpositive_steps() {
    let scenario = Scenario::homogeneous(0.1, 1e-2, 1.0, |_| [0.0; 2]);
    let mesh = build_structured(&scenario.domain, 1).unwrap();
    let disc = Discretization::new(&scenario, mesh, 1).unwrap();
    let mut stepper = Stepper::new(disc.context(&scenario)).unwrap();
    let state = State::zeros(&disc.dofs, 0.0);
    assert!(stepper.step(&state, 0.0).is_err());
    assert!(stepper.step(&state, f64::NAN).is_err());
}

//! Randomized invariants of the discrete norms, the permeability draw and
//! the assembled operators.

use hdg_core::diagnostics::{triple_norms, NormBlocks};
use hdg_core::femlib::ReferenceElement;
use hdg_core::forms::{Permeability, StepInput};
use hdg_core::mesh::{build_structured, DomainSpec, Mesh, Subdomain};
use hdg_core::scenarios::{PermeabilityField, Scenario};
use hdg_core::solver::{constrained_values, Assembler};
use hdg_core::spaces::{build_dofs, BcMode};
use hdg_core::stepper::Discretization;
use proptest::prelude::*;

fn mesh(ny: usize) -> Mesh {
    build_structured(&DomainSpec::manufactured(), ny).unwrap()
}

fn coefficients(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norms_are_absolutely_homogeneous(seed_scale in -5.0f64..5.0, k in 1usize..=2) {
        let m = mesh(1);
        let dofs = build_dofs(&m, k, BcMode::Inhomogeneous).unwrap();
        let re = ReferenceElement::new(k).unwrap();
        let blocks = NormBlocks::new(&m, &dofs, &re).unwrap();
        let x: Vec<f64> = (0..dofs.n_total).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.4).collect();
        let scaled: Vec<f64> = x.iter().map(|v| seed_scale * v).collect();
        let a = triple_norms(&blocks, &x);
        let b = triple_norms(&blocks, &scaled);
        let tol = 1e-12 * (1.0 + a.v_prime);
        prop_assert!((b.v - seed_scale.abs() * a.v).abs() <= tol * seed_scale.abs().max(1.0));
        prop_assert!((b.p - seed_scale.abs() * a.p).abs() <= tol * seed_scale.abs().max(1.0));
    }

    #[test]
    fn velocity_norm_is_dominated_by_its_strengthened_form(x in coefficients(400)) {
        let m = mesh(1);
        let dofs = build_dofs(&m, 2, BcMode::Inhomogeneous).unwrap();
        let re = ReferenceElement::new(2).unwrap();
        let blocks = NormBlocks::new(&m, &dofs, &re).unwrap();
        let full: Vec<f64> = (0..dofs.n_total).map(|i| x[i % x.len()]).collect();
        let n = triple_norms(&blocks, &full);
        prop_assert!(n.v <= n.v_prime * (1.0 + 1e-12));
        prop_assert!(n.v_s <= n.v + 1e-12 && n.v_d <= n.v + 1e-12);
        prop_assert!(n.p_s <= n.p + 1e-12 && n.p_d <= n.p + 1e-12);
    }

    #[test]
    fn permeability_draw_is_deterministic_and_bounded(seed in any::<u64>(), mu in 1e-5f64..1.0) {
        let m = mesh(2);
        let a = PermeabilityField::new(&m, mu, seed);
        let b = PermeabilityField::new(&m, mu, seed);
        // Free-flow cells hold NaN, so compare bit patterns.
        let bits = |f: &PermeabilityField| f.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        for (c, cell) in m.cells.iter().enumerate() {
            let v = a.values[c];
            match cell.subdomain {
                Subdomain::Stokes => prop_assert!(v.is_nan()),
                Subdomain::Darcy => {
                    let ratio = v / mu;
                    prop_assert!((1e-6 * (1.0 - 1e-12)..=1e-2 * (1.0 + 1e-12)).contains(&ratio), "{}", ratio);
                }
            }
        }
    }

    #[test]
    fn system_matrix_is_independent_of_the_load(t in 0.0f64..2.0) {
        // Loads and lifted data move with time; the operator does not.
        let scenario = Scenario::manufactured(0.1, 1e-2, 1.0);
        let disc = Discretization::new(&scenario, mesh(1), 1).unwrap();
        let asm = Assembler::new(disc.context(&scenario)).unwrap();
        let cv0 = constrained_values(&disc.mesh, &disc.dofs, &disc.re, scenario.data.as_ref(), 0.0).unwrap();
        let cv1 = constrained_values(&disc.mesh, &disc.dofs, &disc.re, scenario.data.as_ref(), t).unwrap();
        let a = asm.assemble(&StepInput::stationary(0.0), &cv0);
        let b = asm.assemble(&StepInput::stationary(t), &cv1);
        prop_assert_eq!(a.matrix.val(), b.matrix.val());
    }

    #[test]
    fn assembly_is_deterministic(k in 1usize..=2) {
        let scenario = Scenario::manufactured(0.1, 1e-2, 1.0);
        let disc = Discretization::new(&scenario, mesh(2), k).unwrap();
        let asm = Assembler::new(disc.context(&scenario)).unwrap();
        let cv = constrained_values(&disc.mesh, &disc.dofs, &disc.re, scenario.data.as_ref(), 0.1).unwrap();
        let prev: Vec<f64> = (0..disc.dofs.n_total).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = asm.assemble(&StepInput::step(0.1, 0.01, &prev), &cv);
        let b = asm.assemble(&StepInput::step(0.1, 0.01, &prev), &cv);
        prop_assert_eq!(a.matrix.val(), b.matrix.val());
        prop_assert_eq!(a.rhs, b.rhs);
    }
}

#[test]
fn distinct_seeds_give_distinct_fields() {
    let m = mesh(2);
    let a = PermeabilityField::new(&m, 0.1, 1);
    let b = PermeabilityField::new(&m, 0.1, 2);
    let differs = a.values.iter().zip(&b.values).any(|(x, y)| !x.is_nan() && x != y);
    assert!(differs);
    let scenario = Scenario::subsurface(0.1, 1.0, 1, Scenario::default_subsurface_polyline());
    match scenario.physical_params(&m, 1).kappa {
        Permeability::PerCell(v) => assert_eq!(v.len(), m.num_cells()),
        Permeability::Constant(_) => panic!("expected a per-cell field"),
    }
}

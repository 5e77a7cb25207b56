//! Serializing a parsed configuration and parsing it again is lossless.

use std::path::PathBuf;

use hdg_nsdarcy::config::{format_polyline, parse_polyline, DtRule, GateConfig, KappaSetting, RunConfig, StepCount, TimeConfig};
use hdg_core::mesh::Splitting;
use hdg_nsdarcy::Command;
use proptest::prelude::*;

fn positive() -> impl Strategy<Value = f64> {
    (1e-6f64..1e3).prop_map(|v| v)
}

fn kappa() -> impl Strategy<Value = KappaSetting> {
    prop_oneof![positive().prop_map(KappaSetting::Constant), any::<u64>().prop_map(|seed| KappaSetting::Random { seed })]
}

fn increasing(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, len).prop_map(|steps| {
        steps
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    })
}

fn time() -> impl Strategy<Value = TimeConfig> {
    let steps = prop_oneof![(1usize..100).prop_map(StepCount::One), increasing(1..=4).prop_map(StepCount::Many)];
    (positive(), prop_oneof![steps.prop_map(|s| (Some(s), None)), positive().prop_map(|f| (None, Some(DtRule { factor: f })))]).prop_map(
        |(t_final, (steps, dt))| TimeConfig { t_final, steps, dt },
    )
}

fn gate() -> impl Strategy<Value = GateConfig> {
    let range = prop::option::of((0.0f64..3.0, 0.0f64..2.0).prop_map(|(lo, w)| [lo, lo + w]));
    (range.clone(), range.clone(), range, prop::option::of(positive())).prop_map(|(e, v, p, c)| GateConfig {
        energy_rate: e,
        velocity_rate: v,
        pressure_rate: p,
        conservation: c,
    })
}

fn polyline() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y)| [x, y]), 2..6)
}

prop_compose! {
    fn config()(
        k in 1usize..=4,
        mu in positive(),
        kappa in kappa(),
        alpha in positive(),
        beta in prop::option::of(positive()),
        levels in increasing(1..=4),
        time in prop::option::of(time()),
        interface in prop::option::of(polyline()),
        output in prop::option::of("[a-z]{1,8}"),
        splitting in prop_oneof![Just(Splitting::Uniform), Just(Splitting::Alternating)],
        vtk_every in 0usize..50,
        gate in prop::option::of(gate()),
    ) -> RunConfig {
        RunConfig {
            command: Command::Probe,
            k,
            mu,
            kappa,
            alpha,
            beta,
            levels,
            time,
            interface: interface.map(|p| format_polyline(&p)),
            output: output.map(PathBuf::from),
            splitting,
            vtk_every,
            gate,
        }
    }
}

proptest! {
    #[test]
    fn toml_round_trip(cfg in config()) {
        prop_assume!(cfg.validate().is_ok());
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.content_hash(), cfg.content_hash());
    }

    #[test]
    fn polyline_round_trip(p in polyline()) {
        prop_assert_eq!(parse_polyline(&format_polyline(&p)).unwrap(), p);
    }

    #[test]
    fn polyline_parser_never_panics(s in "[0-9.,; eE+-]{0,40}") {
        let _ = parse_polyline(&s);
    }
}

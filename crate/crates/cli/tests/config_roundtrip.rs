use netform_cli::config::{ExperimentConfig, PRESETS};
use proptest::prelude::*;

#[test]
fn presets_round_trip() {
    for name in PRESETS {
        let c = ExperimentConfig::preset(name).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }
}

proptest! {
    #[test]
    fn edited_configs_round_trip(
        width in 1.0f64..500.0,
        density in 1e-4f64..1.0,
        rho in 0.0f64..0.99,
        u in proptest::option::of(0.0f64..3.0),
        min_coverage in proptest::option::of(0.1f64..5.0),
        seeds in proptest::collection::vec(0u64..=i64::MAX as u64, 1..6),
        flows in proptest::collection::vec(proptest::collection::vec(0usize..4, 0..3), 1..4),
        gamma in prop_oneof![Just("log".to_string()), Just("sqrt".to_string()), (1.0f64..20.0).prop_map(|k| format!("capped-linear:{k}"))],
    ) {
        let mut c = ExperimentConfig::default();
        c.width = width;
        c.density = density;
        c.rho = rho;
        c.u = u;
        c.min_coverage = min_coverage;
        c.seeds = seeds;
        c.flows = flows;
        c.gamma = gamma;
        let once = ExperimentConfig::parse(&c.to_toml()).unwrap();
        prop_assert_eq!(&once, &c);
        prop_assert_eq!(ExperimentConfig::parse(&once.to_toml()).unwrap(), once);
    }
}

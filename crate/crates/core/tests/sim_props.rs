use netform_core::netsim::{BetaSchedule, Point, Role, SimConfig, Simulation, Strategy};

fn short(horizon: u64) -> SimConfig {
    SimConfig { horizon, event_log: true, ..Default::default() }
}

#[test]
fn zero_discount_matches_myopic_step_for_step() {
    let mut cfg = short(150);
    cfg.mdp.rho = 0.0;
    for seed in 0..3 {
        let mut a = Simulation::build(&cfg, Strategy::Proposed, seed).unwrap();
        let mut b = Simulation::build(&cfg, Strategy::Myopic, seed).unwrap();
        assert_eq!(a.run(), b.run());
        assert_eq!(a.take_events(), b.take_events());
    }
}

#[test]
fn fixed_range_never_moves() {
    let cfg = short(200);
    let mut sim = Simulation::build(&cfg, Strategy::FixedRange, 9).unwrap();
    let r = sim.fixed_range();
    for _ in 0..200 {
        sim.step();
        for v in sim.nodes().iter().filter(|v| v.role == Role::Relay) {
            assert_eq!(v.range.to_bits(), r.to_bits());
        }
    }
}

#[test]
fn same_seed_same_stream() {
    let cfg = short(200);
    for strategy in Strategy::ALL {
        let mut a = Simulation::build(&cfg, strategy, 4).unwrap();
        let mut b = Simulation::build(&cfg, strategy, 4).unwrap();
        let (ra, rb) = (a.run(), b.run());
        assert_eq!(format!("{ra:?}"), format!("{rb:?}"));
        assert_eq!(a.take_events(), b.take_events());
    }
}

#[test]
fn decodes_always_match_ground_truth() {
    let cfg = short(300);
    for strategy in Strategy::ALL {
        let mut sim = Simulation::build(&cfg, strategy, 2).unwrap();
        sim.run();
        assert!(sim.ledger().delivered() > 0);
        assert_eq!(sim.decode_mismatches(), 0);
    }
}

#[test]
fn effective_receivers_thin_by_failure_rate() {
    let beta = 0.2;
    let mut cfg = SimConfig {
        width: 20.0,
        height: 20.0,
        density: 0.05,
        sources: vec![Point::new(2.0, 10.0)],
        terminals: vec![Point::new(18.0, 10.0)],
        flows: vec![vec![]],
        mobility_sigma: 0.0,
        churn: false,
        beta: BetaSchedule::Fixed(beta),
        horizon: 10_000,
        ..Default::default()
    };
    cfg.mdp.s_max = 60;
    cfg.initial_range = Some(cfg.region_units());
    let mut sim = Simulation::build(&cfg, Strategy::FixedRange, 17).unwrap();
    let (mut seen, mut in_range) = (0usize, 0usize);
    for _ in 0..cfg.horizon {
        sim.step();
        let links = sim.links();
        for (i, v) in sim.nodes().iter().enumerate() {
            if v.role != Role::Relay || v.buffer().is_empty() {
                continue;
            }
            if let Some(s) = v.observed_state() {
                seen += s;
                in_range += links.iter().filter(|&&(a, _)| a == i).count();
            }
        }
    }
    let ratio = seen as f64 / in_range as f64;
    assert!((ratio / (1.0 - beta) - 1.0).abs() <= 0.02, "ratio {ratio}");
}

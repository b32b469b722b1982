//! Self-check suites behind `netform validate`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use netform_core::galois::{self, peasant_mul, Field};
use netform_core::mdp::{self, MdpModel, MdpParams};
use netform_core::netsim::{BetaSchedule, Point, Role, SimConfig, Simulation, Strategy};
use netform_core::rlnc;
use netform_core::stationary::{self, ChainClass, PolicyChain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checks: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &'static str) -> Self {
        Self { name, checks: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failures.len() < 20 {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Table products against carry-less multiplication, inverses, and the ring
/// axioms on `f`; exhaustive axioms on GF(2^4).
pub fn field_axioms(f: &Field) -> SuiteResult {
    let mut r = SuiteResult::new("field-axioms");
    let q = f.size() as u32;
    let el = |v: u32| f.element(v).expect("in range");
    let mul = |a: u32, b: u32| f.mul(el(a), el(b)).expect("same field").value() as u32;
    for a in 0..q {
        for b in 0..q {
            let want = peasant_mul(a, b, f.poly(), f.order());
            r.check(mul(a, b) == want, || format!("{a:#x} * {b:#x} != {want:#x} (carry-less product)"));
        }
        if a != 0 {
            let ok = f.inv(el(a)).map(|i| mul(a, i.value() as u32) == 1).unwrap_or(false);
            r.check(ok, || format!("{a:#x} * inv({a:#x}) != 1"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xF1E1D);
    for _ in 0..10_000 {
        let (a, b, c) = (rng.gen_range(0..q), rng.gen_range(0..q), rng.gen_range(0..q));
        r.check(mul(mul(a, b), c) == mul(a, mul(b, c)), || format!("associativity fails at {a:#x},{b:#x},{c:#x}"));
        r.check(mul(a, b ^ c) == mul(a, b) ^ mul(a, c), || format!("distributivity fails at {a:#x},{b:#x},{c:#x}"));
    }
    let small = galois::field(4).expect("GF(16)");
    let all: Vec<_> = small.elements().collect();
    for &a in &all {
        for &b in &all {
            for &c in &all {
                r.check((a * b) * c == a * (b * c) && a * (b + c) == a * b + a * c, || {
                    format!("GF(16) axioms fail at {a},{b},{c}")
                });
            }
        }
    }
    r
}

fn reference_model(beta: f64, rho: f64) -> MdpModel {
    MdpModel::new(MdpParams { beta, rho, ..Default::default() }).expect("reference parameters are valid")
}

/// Row sums, nonnegativity, and composition of grow kernels.
pub fn kernel_suite() -> SuiteResult {
    let mut r = SuiteResult::new("kernel");
    for beta in [0.0, 0.1, 0.2, 0.3] {
        let m = reference_model(beta, 0.5);
        for s in 1..=m.num_states() {
            for ai in 0..m.actions().len() {
                if let Some(row) = m.row(s, ai) {
                    let sum: f64 = row.iter().sum();
                    r.check((sum - 1.0).abs() <= 1e-12 && row.iter().all(|&p| p >= 0.0), || {
                        format!("beta {beta} s {s} a {}: row sum {sum}", m.actions()[ai])
                    });
                }
            }
        }
    }
    let m = MdpModel::new(MdpParams { s_max: 80, actions: mdp::symmetric_actions(9), ..Default::default() })
        .expect("valid");
    let n = m.num_states();
    for (a1, a2) in [(1.0, 1.0), (1.0, 2.0), (2.0, 2.0)] {
        for s in 1..=10 {
            let first = m.transition(s, a1).expect("grow");
            let mut two = vec![0.0; n];
            for (mid, &p) in first.iter().enumerate() {
                for (j, q) in m.transition(mid + 1, a2).expect("grow").into_iter().enumerate() {
                    two[j] += p * q;
                }
            }
            let one = m.transition(s, a1 + a2).expect("grow");
            let err = (0..n - 1).map(|j| (two[j] - one[j]).abs()).fold(0.0, f64::max);
            r.check(err <= 1e-10, || format!("s {s}: kernel({a1})*kernel({a2}) off by {err:e}"));
        }
    }
    r
}

/// Monotonicity, additivity and contraction of the Bellman operator.
pub fn bellman_suite() -> SuiteResult {
    let mut r = SuiteResult::new("bellman");
    let mut rng = ChaCha8Rng::seed_from_u64(0xBE11);
    for rho in [0.3, 0.5, 0.9] {
        let m = reference_model(0.0, rho);
        let n = m.num_states();
        for _ in 0..100 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let up: Vec<f64> = v.iter().map(|x| x + rng.gen_range(0.0..10.0)).collect();
            let (tv, tw, tu) = (mdp::bellman_backup(&v, &m), mdp::bellman_backup(&w, &m), mdp::bellman_backup(&up, &m));
            r.check(tv.iter().zip(&tu).all(|(a, b)| *a <= b + 1e-12), || format!("rho {rho}: monotonicity"));
            for d in [-1.0, 0.5, 3.0] {
                let shifted: Vec<f64> = v.iter().map(|x| x + d).collect();
                let ts = mdp::bellman_backup(&shifted, &m);
                let err = ts.iter().zip(&tv).map(|(a, b)| (a - b - rho * d).abs()).fold(0.0, f64::max);
                r.check(err <= 1e-9, || format!("rho {rho}: additivity off by {err:e} for d {d}"));
            }
            let ratio = mdp::sup_dist(&tv, &tw) / mdp::sup_dist(&v, &w);
            r.check(ratio <= rho + 1e-12, || format!("rho {rho}: contraction ratio {ratio}"));
        }
    }
    r
}

/// Stationarity of ergodic limits and agreement of the absorbing analysis
/// with matrix powers.
pub fn chain_suite() -> SuiteResult {
    let mut r = SuiteResult::new("chain");
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4A1);
    for _ in 0..20 {
        let n = rng.gen_range(2..12);
        let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(0.01..1.0));
        normalise_rows(&mut m);
        let chain = PolicyChain::from_matrix(m).expect("stochastic");
        match stationary::limiting_ergodic(&chain) {
            Ok(sigma) => {
                let res = stationary::stationarity_residual(&chain, &sigma);
                r.check(res <= 1e-9, || format!("ergodic residual {res:e}"));
            }
            Err(e) => r.check(false, || format!("ergodic chain rejected: {e}")),
        }
    }
    for _ in 0..20 {
        let n = rng.gen_range(3..10);
        let k = rng.gen_range(1..3);
        let mut m = DMatrix::from_fn(n, n, |i, _| if i < n - k { rng.gen_range(0.05..1.0) } else { 0.0 });
        for i in n - k..n {
            m[(i, i)] = 1.0;
        }
        normalise_rows(&mut m);
        let chain = PolicyChain::from_matrix(m.clone()).expect("stochastic");
        r.check(chain.class() == ChainClass::Absorbing, || "absorbing chain misclassified".into());
        let Ok(lim) = stationary::limiting_absorbing(&chain) else {
            r.check(false, || "absorbing analysis failed".into());
            continue;
        };
        let p = stationary::matrix_power_limit(&m, 40);
        for (ti, &t) in lim.transient.iter().enumerate() {
            for (aj, &a) in lim.absorbing.iter().enumerate() {
                let err = (lim.fr[(ti, aj)] - p[(t, a)]).abs();
                r.check(err <= 1e-8, || format!("absorption probability off by {err:e}"));
            }
        }
    }
    r
}

fn normalise_rows(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        let s = m.row(i).sum();
        m.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
}

/// Static, failure-free network with two flows to distinct terminals, so a
/// packet is anonymous only once it mixes both sources.
pub fn anonymity_config() -> SimConfig {
    let range = std::f64::consts::PI * 9.0 * 9.0;
    let mut cfg = SimConfig {
        width: 30.0,
        height: 30.0,
        density: 0.03,
        coverage_unit: 1.0,
        sources: vec![Point::new(2.0, 10.0), Point::new(2.0, 20.0)],
        terminals: vec![Point::new(28.0, 10.0), Point::new(28.0, 20.0)],
        flows: vec![vec![0], vec![1]],
        source_range: range,
        initial_range: Some(range),
        ttl: 1000,
        mobility_sigma: 0.0,
        dynamics_period: 0,
        churn: false,
        beta: BetaSchedule::Fixed(0.0),
        single_generation: true,
        ..Default::default()
    };
    cfg.mdp.min_coverage = Some(1.0);
    cfg.mdp.s_max = 30;
    cfg
}

#[derive(Debug, Clone, Copy)]
pub struct AnonymityTrial {
    pub nodes: usize,
    pub diameter: usize,
    pub index: f64,
}

/// Hop diameter of the forwarding graph: undirected links among `nodes`
/// where only nodes with `relays[i]` set may sit inside a path. `None` if
/// some pair is unreachable.
pub fn diameter(nodes: &[usize], relays: &[bool], links: &[(usize, usize)]) -> Option<usize> {
    let n = relays.len();
    let member: Vec<bool> = (0..n).map(|i| nodes.contains(&i)).collect();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in links {
        if member[a] && member[b] {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut best = 0;
    for &s in nodes {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u != s && !relays[u] {
                continue;
            }
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for &t in nodes {
            if dist[t] == usize::MAX {
                return None;
            }
            best = best.max(dist[t]);
        }
    }
    Some(best)
}

/// Runs one static network for twice its diameter and measures the
/// anonymity index of the relays' last broadcasts. `None` when the placement
/// is disconnected or exceeds `max_nodes`.
pub fn anonymity_trial(cfg: &SimConfig, seed: u64, max_nodes: usize) -> Option<AnonymityTrial> {
    let mut sim = Simulation::build(cfg, Strategy::FixedRange, seed).ok()?;
    let nodes = sim.nodes().len();
    if nodes > max_nodes {
        return None;
    }
    let relays: Vec<bool> = sim.nodes().iter().map(|v| v.role == Role::Relay).collect();
    let forwarding: Vec<usize> = (0..nodes).filter(|&i| sim.nodes()[i].role != Role::Terminal).collect();
    let diameter = diameter(&forwarding, &relays, &sim.links())?;
    for _ in 0..2 * diameter {
        sim.step();
    }
    let packets = sim.relay_packets();
    if packets.is_empty() {
        return None;
    }
    Some(AnonymityTrial { nodes, diameter, index: rlnc::anonymity_index(packets, sim.flows()) })
}

pub fn anonymity_suite(trials: usize) -> SuiteResult {
    let mut r = SuiteResult::new("anonymity");
    let cfg = anonymity_config();
    let mut indices = Vec::new();
    let mut seed = 0;
    while indices.len() < trials && seed < 20 * trials as u64 {
        if let Some(t) = anonymity_trial(&cfg, seed, 50) {
            indices.push(t.index);
        }
        seed += 1;
    }
    r.check(indices.len() == trials, || format!("only {} connected placements", indices.len()));
    let mean = indices.iter().sum::<f64>() / indices.len().max(1) as f64;
    r.check(mean >= 0.99, || format!("mean anonymity index {mean:.4} < 0.99"));
    r
}

pub fn run_all(field: &Field) -> Vec<SuiteResult> {
    vec![field_axioms(field), kernel_suite(), bellman_suite(), chain_suite(), anonymity_suite(20)]
}

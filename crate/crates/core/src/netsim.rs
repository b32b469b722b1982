//! Discrete-time simulation of a mobile, network-coded ad hoc network whose
//! relays adapt their coverage with a solved MDP policy.
//!
//! One step is one unit of time. Sources broadcast a fresh generation each
//! step, relays with buffered packets broadcast one recombination, and every
//! packet sent during step `k` is in its receivers' hands at time `k + 1`, so
//! a delivery's travel time equals its hop count.
//!
//! Randomness is split into independent streams (world dynamics, link
//! failures, coding coefficients, payloads). Node positions, membership, `beta`
//! and link-failure draws are therefore identical across strategies run on
//! the same seed.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::galois::{self, Field, GfElement, GfMatrix};
use crate::mdp::{self, Gamma, MdpError, MdpModel, MdpParams, Policy};
use crate::rlnc::{self, Buffer, CoefficientDraw, FlowSpec, Packet, RlncError};
use crate::stationary::{self, ChainError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Rlnc(#[from] RlncError),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source,
    Terminal,
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Proposed,
    Myopic,
    FixedRange,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Proposed, Strategy::Myopic, Strategy::FixedRange];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::Myopic => "myopic",
            Strategy::FixedRange => "fixed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "proposed" => Some(Strategy::Proposed),
            "myopic" => Some(Strategy::Myopic),
            "fixed" | "fixed-range" => Some(Strategy::FixedRange),
            _ => None,
        }
    }
}

/// Which buffered generation a relay recombines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelayOrder {
    #[default]
    Newest,
    Oldest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    Fixed(f64),
    /// Re-drawn uniformly from `[lo, hi]` at every dynamics event.
    Uniform { lo: f64, hi: f64 },
}

impl BetaSchedule {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            BetaSchedule::Fixed(b) => (b, b),
            BetaSchedule::Uniform { lo, hi } => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub width: f64,
    pub height: f64,
    /// Relay density per square metre.
    pub density: f64,
    /// Square metres per coverage unit; MDP actions are in these units.
    pub coverage_unit: f64,
    pub sources: Vec<Point>,
    pub terminals: Vec<Point>,
    /// Terminal indices served by each source; empty means all of them.
    pub flows: Vec<Vec<usize>>,
    /// Fixed source coverage, in units.
    pub source_range: f64,
    /// Relay coverage at start; `None` uses the stationary initial state.
    pub initial_range: Option<f64>,
    pub ttl: u64,
    pub payload_len: usize,
    pub field_order: u8,
    /// Bits represented by one generation, for goodput.
    pub data_bits: f64,
    /// Seconds per step.
    pub unit_time: f64,
    pub eta: f64,
    pub alpha: f64,
    /// Standard deviation of per-step displacement, metres.
    pub mobility_sigma: f64,
    /// Steps between membership and `beta` updates; 0 disables both.
    pub dynamics_period: u64,
    pub churn: bool,
    pub beta: BetaSchedule,
    /// Width of the `beta` bands policies are solved for.
    pub beta_band: f64,
    /// Template for the per-band models; `lambda` and `beta` are overwritten.
    pub mdp: MdpParams,
    pub epsilon: f64,
    pub relay_order: RelayOrder,
    pub draw: CoefficientDraw,
    pub horizon: u64,
    /// Sources repeat generation 0 instead of producing new ones.
    pub single_generation: bool,
    pub event_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            width: 60.0,
            height: 60.0,
            density: 8e-3,
            coverage_unit: 125.0,
            sources: vec![Point::new(5.0, 20.0), Point::new(5.0, 40.0)],
            terminals: vec![Point::new(55.0, 20.0), Point::new(55.0, 40.0)],
            flows: vec![vec![], vec![]],
            source_range: 6.0,
            initial_range: None,
            ttl: rlnc::DEFAULT_TTL,
            payload_len: rlnc::DEFAULT_PAYLOAD_LEN,
            field_order: galois::DEFAULT_ORDER,
            data_bits: 910_000.0,
            unit_time: 1e-3,
            eta: 1.0,
            alpha: 2.0,
            mobility_sigma: 1.0,
            dynamics_period: 5,
            churn: true,
            beta: BetaSchedule::Uniform { lo: 0.0, hi: 0.3 },
            beta_band: 0.05,
            mdp: MdpParams {
                s_max: 18,
                actions: mdp::symmetric_actions(7),
                omega: 0.53,
                u: Some(0.2),
                rho: 0.6,
                gamma: Gamma::CappedLinear { knee: 8.0 },
                gamma_scale: 2.0,
                min_coverage: Some(3.0),
                ..Default::default()
            },
            epsilon: mdp::DEFAULT_EPSILON,
            relay_order: RelayOrder::Newest,
            draw: CoefficientDraw::Uniform,
            horizon: 1000,
            single_generation: false,
            event_log: false,
        }
    }
}

impl SimConfig {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Expected relays per coverage unit.
    pub fn lambda_per_unit(&self) -> f64 {
        self.density * self.coverage_unit
    }

    pub fn region_units(&self) -> f64 {
        self.area() / self.coverage_unit
    }

    /// Radius in metres of a coverage measure given in units.
    pub fn radius(&self, range_units: f64) -> f64 {
        (range_units.max(0.0) * self.coverage_unit / std::f64::consts::PI).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Config(m.into()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("region must have positive width and height");
        }
        if !(self.density >= 0.0) || self.density * self.area() <= 0.0 {
            return bad("expected relay count (density x area) must be positive");
        }
        if !(self.coverage_unit > 0.0) {
            return bad("coverage unit must be positive");
        }
        if self.sources.is_empty() || self.terminals.is_empty() {
            return bad("need at least one source and one terminal");
        }
        if self.flows.len() != self.sources.len() {
            return bad("one flow entry per source");
        }
        if self.flows.iter().flatten().any(|&t| t >= self.terminals.len()) {
            return bad("flow names a terminal that does not exist");
        }
        let inside = |p: &Point| (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y);
        if !self.sources.iter().chain(&self.terminals).all(inside) {
            return bad("sources and terminals must lie in the region");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.payload_len == 0 {
            return bad("payload length must be positive");
        }
        if !(self.unit_time > 0.0 && self.data_bits >= 0.0) {
            return bad("unit time must be positive and data size nonnegative");
        }
        if !(self.eta >= 0.0 && self.alpha >= 0.0) {
            return bad("path-loss constants must be nonnegative");
        }
        if !(self.mobility_sigma >= 0.0) {
            return bad("mobility step must be nonnegative");
        }
        let (lo, hi) = self.beta.bounds();
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return bad("beta must satisfy 0 <= lo <= hi < 1");
        }
        if !(self.beta_band > 0.0) {
            return bad("beta band must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(0.0..1.0).contains(&self.mdp.rho) {
            return bad("rho must lie in [0, 1)");
        }
        galois::field(self.field_order).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(())
    }

    /// Flow spec with sources `0..N_H` and terminals `N_H..N_H + N_T`.
    pub fn flow_spec(&self) -> Result<FlowSpec> {
        let nh = self.sources.len() as u32;
        let pairs = self.flows.iter().enumerate().map(|(h, ts)| {
            let ts: Vec<u32> = if ts.is_empty() {
                (0..self.terminals.len() as u32).map(|t| nh + t).collect()
            } else {
                ts.iter().map(|&t| nh + t as u32).collect()
            };
            (h as u32, ts)
        });
        Ok(FlowSpec::from_pairs(pairs)?)
    }

    fn band_of(&self, beta: f64) -> usize {
        (beta / self.beta_band).round() as usize
    }

    fn band_beta(&self, band: usize) -> f64 {
        let (_, hi) = self.beta.bounds();
        (band as f64 * self.beta_band).min(hi.max(0.0))
    }

    /// Representative failure rate of every band the schedule can visit.
    pub fn band_betas(&self) -> Vec<f64> {
        let (lo, hi) = self.beta.bounds();
        (self.band_of(lo)..=self.band_of(hi)).map(|b| self.band_beta(b)).collect()
    }

    pub fn model_for(&self, beta: f64, rho: f64) -> Result<MdpModel> {
        let mut p = self.mdp.clone();
        p.lambda = self.lambda_per_unit();
        p.beta = beta;
        p.rho = rho;
        Ok(MdpModel::new(p)?)
    }
}

/// Policy, model and stationary start for one `beta` band.
#[derive(Debug, Clone)]
pub struct BandPolicy {
    pub beta: f64,
    pub model: MdpModel,
    pub policy: Policy,
    pub s_dagger: usize,
    /// Coverage, in units, that holds `xi(s_dagger)` relays on average.
    pub initial_range: f64,
}

/// Policies for every `beta` band a configuration can visit.
#[derive(Debug, Clone)]
pub struct PolicyBook {
    bands: BTreeMap<usize, BandPolicy>,
}

impl PolicyBook {
    /// Solves with `rho` from the config template, or the myopic argmax.
    pub fn solve(config: &SimConfig, myopic: bool) -> Result<Self> {
        let (lo, hi) = config.beta.bounds();
        let mut bands = BTreeMap::new();
        for band in config.band_of(lo)..=config.band_of(hi) {
            let beta = config.band_beta(band);
            let rho = if myopic { 0.0 } else { config.mdp.rho };
            let model = config.model_for(beta, rho)?;
            let policy = if myopic {
                mdp::myopic_policy(&model)
            } else {
                mdp::solve_policy(&model, config.epsilon)?
            };
            let chain = stationary::induce_chain(&policy, &model)?;
            let limit = stationary::limiting_distribution(&chain)?;
            let s_dagger = stationary::initial_state(&limit.sigma);
            let initial_range = model.xi(s_dagger) as f64 / config.lambda_per_unit();
            bands.insert(band, BandPolicy { beta, model, policy, s_dagger, initial_range });
        }
        Ok(Self { bands })
    }

    pub fn band(&self, config: &SimConfig, beta: f64) -> &BandPolicy {
        let b = config.band_of(beta);
        self.bands
            .get(&b)
            .or_else(|| self.bands.range(..=b).next_back().map(|(_, v)| v))
            .or_else(|| self.bands.values().next())
            .expect("at least one band")
    }

    pub fn bands(&self) -> impl Iterator<Item = &BandPolicy> {
        self.bands.values()
    }
}

/// Intermediate count for one placement: Poisson with mean `lambda * area`.
pub fn ppp_count<R: Rng + ?Sized>(area: f64, lambda: f64, rng: &mut R) -> usize {
    let mean = area * lambda;
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// Uniform placement of a Poisson number of points in a `w x h` region.
pub fn ppp_points<R: Rng + ?Sized>(w: f64, h: f64, lambda: f64, rng: &mut R) -> Vec<Point> {
    let n = ppp_count(w * h, lambda, rng);
    (0..n).map(|_| Point::new(rng.gen_range(0.0..=w), rng.gen_range(0.0..=h))).collect()
}

/// Second-smallest Laplacian eigenvalue of an undirected graph on `n` nodes.
pub fn algebraic_connectivity(n: usize, edges: &[(usize, usize)]) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mut lap = DMatrix::<f64>::zeros(n, n);
    let mut seen = BTreeSet::new();
    for &(i, j) in edges {
        let key = (i.min(j), i.max(j));
        if i == j || !seen.insert(key) {
            continue;
        }
        lap[(i, j)] -= 1.0;
        lap[(j, i)] -= 1.0;
        lap[(i, i)] += 1.0;
        lap[(j, j)] += 1.0;
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(lap).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev[1].max(0.0)
}

/// Sum of `bits / travel_time` over deliveries, in Mbps. Travel times are
/// in steps.
pub fn goodput_mbps(travel_steps: &[u64], bits: f64, unit_time: f64) -> f64 {
    travel_steps.iter().fold(0.0, |acc, &t| acc + bits / (t as f64 * unit_time)) / 1e6
}

/// Linear path-loss transmit power `eta * r^alpha`.
pub fn tx_power(radius: f64, eta: f64, alpha: f64) -> f64 {
    if radius <= 0.0 {
        0.0
    } else {
        eta * radius.powf(alpha)
    }
}

/// Total linear power reported in dB relative to one unit, floored at 0.
pub fn power_db(total_linear: f64) -> f64 {
    10.0 * total_linear.max(1.0).log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryStatus {
    Pending,
    Delivered(u64),
    Expired,
}

/// Fate of every (source, terminal, generation) triple.
#[derive(Debug, Clone, Default)]
pub struct DeliveryLedger {
    entries: BTreeMap<(u32, u32, u64), DeliveryStatus>,
    delivered: usize,
    expired: usize,
}

impl DeliveryLedger {
    pub fn open(&mut self, h: u32, t: u32, stamp: u64) {
        self.entries.entry((h, t, stamp)).or_insert(DeliveryStatus::Pending);
    }

    /// Marks a pending triple delivered; returns whether it was pending.
    pub fn deliver(&mut self, h: u32, t: u32, stamp: u64, at: u64) -> bool {
        match self.entries.get_mut(&(h, t, stamp)) {
            Some(st @ DeliveryStatus::Pending) => {
                debug_assert!(at >= stamp);
                *st = DeliveryStatus::Delivered(at);
                self.delivered += 1;
                true
            }
            _ => false,
        }
    }

    /// Expires pending triples older than `ttl` at time `now`.
    pub fn expire(&mut self, now: u64, ttl: u64) -> usize {
        let mut n = 0;
        for ((_, _, stamp), st) in self.entries.iter_mut() {
            if *st == DeliveryStatus::Pending && now.saturating_sub(*stamp) > ttl {
                *st = DeliveryStatus::Expired;
                n += 1;
            }
        }
        self.expired += n;
        n
    }

    pub fn status(&self, h: u32, t: u32, stamp: u64) -> Option<DeliveryStatus> {
        self.entries.get(&(h, t, stamp)).copied()
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }

    pub fn expired(&self) -> usize {
        self.expired
    }

    pub fn generated(&self) -> usize {
        self.entries.len()
    }

    /// Delivered over settled (delivered or expired) triples; 0 when none
    /// have settled.
    pub fn connectivity_ratio(&self) -> f64 {
        let settled = self.delivered + self.expired;
        if settled == 0 {
            0.0
        } else {
            self.delivered as f64 / settled as f64
        }
    }

    /// Triples delivered, with their travel time in steps.
    pub fn deliveries(&self) -> impl Iterator<Item = ((u32, u32, u64), u64)> + '_ {
        self.entries.iter().filter_map(|(&k, st)| match st {
            DeliveryStatus::Delivered(at) => Some((k, at - k.2)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub time: u64,
    pub goodput_mbps: f64,
    pub scr: f64,
    /// dB over one linear unit of summed `eta * r^alpha`.
    pub power: f64,
    pub links: usize,
    pub alg_conn: f64,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: u32,
    pub role: Role,
    pub pos: Point,
    /// Coverage in units.
    pub range: f64,
    buffer: Buffer,
    observed: Option<usize>,
}

impl Node {
    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    /// Effective receivers of the node's last broadcast, clamped to states.
    pub fn observed_state(&self) -> Option<usize> {
        self.observed
    }
}

#[derive(Debug, Default, Clone)]
struct TerminalGeneration {
    rows: Vec<Packet>,
    done: BTreeSet<u32>,
}

/// One simulation run of one strategy on one seed.
pub struct Simulation {
    config: SimConfig,
    strategy: Strategy,
    book: Arc<PolicyBook>,
    fixed_range: f64,
    field: &'static Field,
    flows: FlowSpec,
    time: u64,
    beta: f64,
    next_id: u32,
    nodes: Vec<Node>,
    inbox: BTreeMap<u32, BTreeMap<u64, TerminalGeneration>>,
    truth: BTreeMap<(u32, u64), Vec<GfElement>>,
    ledger: DeliveryLedger,
    decode_mismatches: usize,
    relay_packets: Vec<Packet>,
    events: Vec<String>,
    world: ChaCha8Rng,
    links_rng: ChaCha8Rng,
    coeff_rng: ChaCha8Rng,
    payload_rng: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl Simulation {
    /// Solves the policies this strategy needs and places the network.
    pub fn build(config: &SimConfig, strategy: Strategy, seed: u64) -> Result<Self> {
        let book = PolicyBook::solve(config, strategy == Strategy::Myopic)?;
        Self::new(config, Arc::new(book), strategy, seed)
    }

    /// Places the network using pre-solved policies. Fixed-range runs take
    /// their coverage from the book's stationary start.
    pub fn new(config: &SimConfig, book: Arc<PolicyBook>, strategy: Strategy, seed: u64) -> Result<Self> {
        config.validate()?;
        let flows = config.flow_spec()?;
        let field = galois::field(config.field_order).map_err(|e| SimError::Config(e.to_string()))?;
        let mut world = stream(seed, 0);
        let beta = match config.beta {
            BetaSchedule::Fixed(b) => b,
            BetaSchedule::Uniform { lo, hi } => world.gen_range(lo..=hi),
        };
        let start = config.initial_range.unwrap_or(book.band(config, beta).initial_range);
        let fixed_range = clamp_range(config, &book.band(config, beta).model, start);

        let mut sim = Self {
            config: config.clone(),
            strategy,
            book,
            fixed_range,
            field,
            flows,
            time: 0,
            beta,
            next_id: 0,
            nodes: Vec::new(),
            inbox: BTreeMap::new(),
            truth: BTreeMap::new(),
            ledger: DeliveryLedger::default(),
            decode_mismatches: 0,
            relay_packets: Vec::new(),
            events: Vec::new(),
            world,
            links_rng: stream(seed, 1),
            coeff_rng: stream(seed, 2),
            payload_rng: stream(seed, 3),
        };
        for &p in &config.sources {
            sim.push_node(Role::Source, p, config.source_range);
        }
        for &p in &config.terminals {
            sim.push_node(Role::Terminal, p, 0.0);
        }
        for p in ppp_points(config.width, config.height, config.density, &mut sim.world) {
            sim.push_node(Role::Relay, p, fixed_range);
        }
        Ok(sim)
    }

    fn push_node(&mut self, role: Role, pos: Point, range: f64) {
        let id = self.next_id;
        self.next_id += 1;
        let buffer = Buffer::new(self.config.ttl);
        self.nodes.push(Node { id, role, pos, range, buffer, observed: None });
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &FlowSpec {
        &self.flows
    }

    pub fn ledger(&self) -> &DeliveryLedger {
        &self.ledger
    }

    /// Decoded payloads that differed from what the source sent.
    pub fn decode_mismatches(&self) -> usize {
        self.decode_mismatches
    }

    /// Packets the relays broadcast in the last step.
    pub fn relay_packets(&self) -> &[Packet] {
        &self.relay_packets
    }

    pub fn take_events(&mut self) -> Vec<String> {
        std::mem::take(&mut self.events)
    }

    pub fn fixed_range(&self) -> f64 {
        self.fixed_range
    }

    fn band(&self) -> &BandPolicy {
        self.book.band(&self.config, self.beta)
    }

    /// Directed in-range links `(i, j)` by node index: `i` is not a terminal,
    /// `j` is not a source.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, a) in self.nodes.iter().enumerate() {
            if a.role == Role::Terminal {
                continue;
            }
            let r = self.config.radius(a.range);
            for (j, b) in self.nodes.iter().enumerate() {
                if i != j && b.role != Role::Source && a.pos.dist(b.pos) <= r {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn run(&mut self) -> Vec<MetricsRow> {
        (0..self.config.horizon).map(|_| self.step()).collect()
    }

    pub fn step(&mut self) -> MetricsRow {
        let k = self.time;
        if k > 0 {
            self.apply_dynamics(k);
        }
        let n = self.nodes.len();
        let beta = self.beta;
        let failed: Vec<bool> = (0..n * n).map(|_| self.links_rng.gen::<f64>() < beta).collect();

        let mut sends: Vec<(usize, Packet)> = Vec::new();
        self.source_broadcasts(k, &mut sends);
        self.relay_broadcasts(k, &mut sends);

        let mut fresh: BTreeSet<(u32, u64)> = BTreeSet::new();
        let s_max = self.config.mdp.s_max;
        for (i, packet) in &sends {
            let (i, r, pos) = (*i, self.config.radius(self.nodes[*i].range), self.nodes[*i].pos);
            let mut effective = 0;
            for j in 0..n {
                let b = &self.nodes[j];
                if j == i || b.role == Role::Source || pos.dist(b.pos) > r || failed[i * n + j] {
                    continue;
                }
                effective += 1;
                match b.role {
                    Role::Relay => self.nodes[j].buffer.push(packet.clone()),
                    Role::Terminal => {
                        let id = b.id;
                        if self.accept_at_terminal(id, packet) {
                            fresh.insert((id, packet.stamp));
                        }
                    }
                    Role::Source => unreachable!(),
                }
            }
            if self.nodes[i].role == Role::Relay {
                self.nodes[i].observed = Some(effective.clamp(1, s_max));
            }
        }

        let now = k + 1;
        let mut travel = Vec::new();
        for (t, stamp) in fresh {
            self.try_terminal_decode(t, stamp, now, &mut travel);
        }
        self.ledger.expire(now, self.config.ttl);
        for node in &mut self.nodes {
            node.buffer.prune(now);
        }
        let ttl = self.config.ttl;
        self.truth.retain(|&(_, s), _| now.saturating_sub(s) <= ttl);
        for gens in self.inbox.values_mut() {
            gens.retain(|&s, _| now.saturating_sub(s) <= ttl);
        }

        let links = self.links();
        let power_total: f64 = self
            .nodes
            .iter()
            .filter(|v| v.role != Role::Terminal)
            .map(|v| tx_power(self.config.radius(v.range), self.config.eta, self.config.alpha))
            .sum();
        let row = MetricsRow {
            time: k,
            goodput_mbps: goodput_mbps(&travel, self.config.data_bits, self.config.unit_time),
            scr: self.ledger.connectivity_ratio(),
            power: power_db(power_total),
            links: links.len(),
            alg_conn: algebraic_connectivity(n, &links),
        };
        self.time = now;
        row
    }

    fn source_broadcasts(&mut self, k: u64, sends: &mut Vec<(usize, Packet)>) {
        let stamp = if self.config.single_generation { 0 } else { k };
        let nh = self.config.sources.len();
        for h in 0..nh as u32 {
            let data = match self.truth.get(&(h, stamp)) {
                Some(d) => d.clone(),
                None => {
                    let d: Vec<GfElement> =
                        (0..self.config.payload_len).map(|_| self.field.random(&mut self.payload_rng)).collect();
                    self.truth.insert((h, stamp), d.clone());
                    for &t in self.flows.terminals_of(h).expect("source in flows") {
                        self.ledger.open(h, t, stamp);
                    }
                    d
                }
            };
            let p = rlnc::encode_source(&self.flows, h, data, stamp).expect("known source");
            if self.config.event_log {
                self.events.push(format!("{k} tx {h} {}", p.log_line()));
            }
            sends.push((h as usize, p));
        }
    }

    fn relay_broadcasts(&mut self, k: u64, sends: &mut Vec<(usize, Packet)>) {
        self.relay_packets.clear();
        let adaptive = self.strategy != Strategy::FixedRange;
        let book = Arc::clone(&self.book);
        let band = book.band(&self.config, self.beta);
        for i in 0..self.nodes.len() {
            if self.nodes[i].role != Role::Relay || self.nodes[i].buffer.is_empty() {
                continue;
            }
            let s = self.nodes[i].observed.unwrap_or(band.s_dagger);
            let mut a = 0.0;
            if adaptive {
                a = band.policy.action(s);
                let next = clamp_range(&self.config, &band.model, self.nodes[i].range + a);
                self.nodes[i].range = next;
            }
            let buf = &self.nodes[i].buffer;
            let stamp = match self.config.relay_order {
                RelayOrder::Newest => buf.newest_stamp(),
                RelayOrder::Oldest => buf.oldest_stamp(),
            }
            .expect("nonempty buffer");
            let p = rlnc::recombine(buf, stamp, self.field, self.config.draw, &mut self.coeff_rng)
                .expect("stamp group exists");
            if self.config.event_log {
                let id = self.nodes[i].id;
                self.events.push(format!("{k} state {id} {s} action {a} range {}", self.nodes[i].range));
                self.events.push(format!("{k} tx {id} {}", p.log_line()));
            }
            self.relay_packets.push(p.clone());
            sends.push((i, p));
        }
    }

    /// Stores a packet if it raises the rank for its generation.
    fn accept_at_terminal(&mut self, t: u32, p: &Packet) -> bool {
        let wanted = self.flows.sources_for(t);
        let gen = self.inbox.entry(t).or_default().entry(p.stamp).or_default();
        if wanted.iter().all(|h| gen.done.contains(h)) || p.is_zero() {
            return false;
        }
        let order = self.config.field_order;
        let mut rows: Vec<Vec<GfElement>> = gen.rows.iter().map(|q| q.coeffs.clone()).collect();
        let before = rows.len();
        rows.push(p.coeffs.clone());
        let rank = GfMatrix::from_rows(order, &rows).expect("uniform rows").rank();
        if rank > before {
            gen.rows.push(p.clone());
            true
        } else {
            false
        }
    }

    fn try_terminal_decode(&mut self, t: u32, stamp: u64, now: u64, travel: &mut Vec<u64>) {
        let Some(gen) = self.inbox.get_mut(&t).and_then(|g| g.get_mut(&stamp)) else { return };
        let Ok(decoded) = rlnc::try_decode(&gen.rows, t, &self.flows) else { return };
        for (h, payload) in decoded {
            if !gen.done.insert(h) {
                continue;
            }
            if self.truth.get(&(h, stamp)) != Some(&payload) {
                self.decode_mismatches += 1;
                continue;
            }
            if self.ledger.deliver(h, t, stamp, now) {
                travel.push(now - stamp);
            }
        }
    }

    fn apply_dynamics(&mut self, k: u64) {
        let (w, h, sigma) = (self.config.width, self.config.height, self.config.mobility_sigma);
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("finite sigma");
            for node in self.nodes.iter_mut().filter(|v| v.role == Role::Relay) {
                node.pos.x = reflect(node.pos.x + normal.sample(&mut self.world), w);
                node.pos.y = reflect(node.pos.y + normal.sample(&mut self.world), h);
            }
        }
        let period = self.config.dynamics_period;
        if period == 0 || k % period != 0 {
            return;
        }
        if let BetaSchedule::Uniform { lo, hi } = self.config.beta {
            self.beta = self.world.gen_range(lo..=hi);
        }
        if self.config.churn {
            self.churn();
        }
    }

    /// Re-draws the relay population: a Poisson count, keeping a random
    /// subset of survivors and placing newcomers uniformly.
    fn churn(&mut self) {
        let target = ppp_count(self.config.area(), self.config.density, &mut self.world);
        let relays: Vec<usize> =
            (0..self.nodes.len()).filter(|&i| self.nodes[i].role == Role::Relay).collect();
        if target < relays.len() {
            let mut keep: Vec<usize> = index::sample(&mut self.world, relays.len(), target).into_vec();
            keep.sort_unstable();
            let keep: BTreeSet<usize> = keep.into_iter().map(|k| relays[k]).collect();
            let mut idx = 0;
            self.nodes.retain(|v| {
                let ok = v.role != Role::Relay || keep.contains(&idx);
                idx += 1;
                ok
            });
        } else {
            let start = if self.strategy == Strategy::FixedRange {
                self.fixed_range
            } else {
                let band = self.band();
                clamp_range(&self.config, &band.model, band.initial_range)
            };
            for _ in relays.len()..target {
                let p = Point::new(
                    self.world.gen_range(0.0..=self.config.width),
                    self.world.gen_range(0.0..=self.config.height),
                );
                self.push_node(Role::Relay, p, start);
            }
        }
    }
}

fn reflect(x: f64, max: f64) -> f64 {
    let period = 2.0 * max;
    let m = x.rem_euclid(period);
    if m > max {
        period - m
    } else {
        m
    }
}

fn clamp_range(config: &SimConfig, model: &MdpModel, r: f64) -> f64 {
    let lo = model.min_coverage().min(config.region_units());
    r.clamp(lo, config.region_units())
}

/// Run means of one metrics stream.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub goodput_mbps: f64,
    pub scr: f64,
    pub power: f64,
    pub links: f64,
    pub alg_conn: f64,
}

pub fn summarize(rows: &[MetricsRow]) -> Summary {
    if rows.is_empty() {
        return Summary::default();
    }
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Summary {
        goodput_mbps: mean(&|r| r.goodput_mbps),
        scr: rows.last().map_or(0.0, |r| r.scr),
        power: mean(&|r| r.power),
        links: mean(&|r| r.links as f64),
        alg_conn: mean(&|r| r.alg_conn),
    }
}

//! Random linear network coding: packets, relay buffers, recombination and
//! terminal-side decoding.
//!
//! Every packet carries its global coefficient vector, one entry per source
//! in [`FlowSpec`] order, so any relay can mix packets of the same stamp
//! without knowing the path they took.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::galois::{self, Field, GaloisError, GfElement, GfMatrix};

pub const DEFAULT_TTL: u64 = 16;
pub const DEFAULT_PAYLOAD_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RlncError {
    #[error("unknown source {0}")]
    UnknownSource(u32),
    #[error("node {0} is not a terminal of any flow")]
    NotATerminal(u32),
    #[error("source {0} has no terminals")]
    EmptyFlow(u32),
    #[error("no packets with stamp {0}")]
    NoPackets(u64),
    #[error("packets carry different stamps")]
    MixedStamps,
    #[error("packet shape mismatch: {0}")]
    Shape(&'static str),
    #[error("source {0} is absent from every received packet")]
    MissingSource(u32),
    #[error("coefficient matrix has rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error(transparent)]
    Field(#[from] GaloisError),
}

pub type Result<T, E = RlncError> = std::result::Result<T, E>;

/// Sources and the terminals each one serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowSpec {
    terminals: BTreeMap<u32, BTreeSet<u32>>,
    union: BTreeSet<u32>,
}

impl FlowSpec {
    pub fn new(terminals: BTreeMap<u32, BTreeSet<u32>>) -> Result<Self> {
        if let Some((&h, _)) = terminals.iter().find(|(_, t)| t.is_empty()) {
            return Err(RlncError::EmptyFlow(h));
        }
        let union = terminals.values().flatten().copied().collect();
        Ok(Self { terminals, union })
    }

    /// Convenience constructor from `(source, [terminals])` pairs.
    pub fn from_pairs<I, T>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, T)>,
        T: IntoIterator<Item = u32>,
    {
        Self::new(pairs.into_iter().map(|(h, t)| (h, t.into_iter().collect())).collect())
    }

    pub fn num_sources(&self) -> usize {
        self.terminals.len()
    }

    pub fn sources(&self) -> impl Iterator<Item = u32> + '_ {
        self.terminals.keys().copied()
    }

    /// Coefficient position of source `h`.
    pub fn index_of(&self, h: u32) -> Option<usize> {
        self.terminals.keys().position(|&k| k == h)
    }

    pub fn source_at(&self, index: usize) -> Option<u32> {
        self.terminals.keys().nth(index).copied()
    }

    pub fn terminals_of(&self, h: u32) -> Option<&BTreeSet<u32>> {
        self.terminals.get(&h)
    }

    /// All terminals, the union over every flow.
    pub fn all_terminals(&self) -> &BTreeSet<u32> {
        &self.union
    }

    /// Sources whose data terminal `t` wants.
    pub fn sources_for(&self, t: u32) -> Vec<u32> {
        self.terminals.iter().filter(|(_, ts)| ts.contains(&t)).map(|(&h, _)| h).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub stamp: u64,
    pub coeffs: Vec<GfElement>,
    pub payload: Vec<GfElement>,
}

impl Packet {
    /// True when the coefficient vector is a unit vector.
    pub fn is_pure_source(&self) -> bool {
        let nonzero: Vec<_> = self.coeffs.iter().filter(|c| !c.is_zero()).collect();
        nonzero.len() == 1 && nonzero[0].value() == 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// One log line: stamp, hex coefficients, first 16 hex digits of the
    /// SHA-256 of the payload values (big-endian u16 each).
    pub fn log_line(&self) -> String {
        let mut out = self.stamp.to_string();
        out.push(' ');
        let wide = self.coeffs.first().is_some_and(|c| c.order() > 8);
        for c in &self.coeffs {
            if wide {
                let _ = write!(out, "{:04x}", c.value());
            } else {
                let _ = write!(out, "{:02x}", c.value());
            }
        }
        let mut hasher = Sha256::new();
        for s in &self.payload {
            hasher.update(s.value().to_be_bytes());
        }
        let digest = hasher.finalize();
        out.push(' ');
        for b in &digest[..8] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }
}

/// Source-side packet: unit coefficient vector for `h`.
pub fn encode_source(flows: &FlowSpec, h: u32, data: Vec<GfElement>, stamp: u64) -> Result<Packet> {
    let idx = flows.index_of(h).ok_or(RlncError::UnknownSource(h))?;
    let order = data.first().map_or(galois::DEFAULT_ORDER, |e| e.order());
    let mut coeffs = vec![GfElement::zero(order); flows.num_sources()];
    coeffs[idx] = GfElement::one(order);
    Ok(Packet { stamp, coeffs, payload: data })
}

/// Union of the terminal sets of every source with a nonzero coefficient.
pub fn terminal_set(p: &Packet, flows: &FlowSpec) -> BTreeSet<u32> {
    p.coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .filter_map(|(i, _)| flows.source_at(i))
        .flat_map(|h| flows.terminals_of(h).into_iter().flatten().copied())
        .collect()
}

/// Relay buffer keyed by stamp, oldest first.
#[derive(Debug, Clone)]
pub struct Buffer {
    ttl: u64,
    groups: BTreeMap<u64, Vec<Packet>>,
}

impl Default for Buffer {
    fn default() -> Self {
        Self::new(DEFAULT_TTL)
    }
}

impl Buffer {
    pub fn new(ttl: u64) -> Self {
        Self { ttl, groups: BTreeMap::new() }
    }

    pub fn ttl(&self) -> u64 {
        self.ttl
    }

    pub fn push(&mut self, p: Packet) {
        self.groups.entry(p.stamp).or_default().push(p);
    }

    /// Drops every packet with `now - stamp > ttl`; returns how many went.
    pub fn prune(&mut self, now: u64) -> usize {
        let ttl = self.ttl;
        let mut dropped = 0;
        self.groups.retain(|&stamp, ps| {
            let keep = now.saturating_sub(stamp) <= ttl;
            if !keep {
                dropped += ps.len();
            }
            keep
        });
        dropped
    }

    pub fn group(&self, stamp: u64) -> &[Packet] {
        self.groups.get(&stamp).map_or(&[], Vec::as_slice)
    }

    pub fn stamps(&self) -> impl DoubleEndedIterator<Item = u64> + '_ {
        self.groups.keys().copied()
    }

    pub fn oldest_stamp(&self) -> Option<u64> {
        self.groups.keys().next().copied()
    }

    pub fn newest_stamp(&self) -> Option<u64> {
        self.groups.keys().next_back().copied()
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.groups.values().flatten()
    }

    pub fn clear(&mut self) {
        self.groups.clear();
    }
}

/// How local coefficients are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoefficientDraw {
    /// Uniform over the whole field, zero included.
    #[default]
    Uniform,
    NonZero,
}

/// Linear combination `sum_j c_j * p_j` over coefficients and payloads.
pub fn combine(packets: &[Packet], local: &[GfElement]) -> Result<Packet> {
    let first = packets.first().ok_or(RlncError::Shape("nothing to combine"))?;
    if local.len() != packets.len() {
        return Err(RlncError::Shape("one local coefficient per packet"));
    }
    let n = first.coeffs.len();
    let l = first.payload.len();
    let order = local[0].order();
    let f = galois::field(order)?;
    let mut coeffs = vec![GfElement::zero(order); n];
    let mut payload = vec![GfElement::zero(order); l];
    for (p, &c) in packets.iter().zip(local) {
        if p.stamp != first.stamp {
            return Err(RlncError::MixedStamps);
        }
        if p.coeffs.len() != n || p.payload.len() != l {
            return Err(RlncError::Shape("packets differ in length"));
        }
        check_order(f, &p.coeffs)?;
        check_order(f, &p.payload)?;
        f.mul_add_into(&mut coeffs, &p.coeffs, c);
        f.mul_add_into(&mut payload, &p.payload, c);
    }
    Ok(Packet { stamp: first.stamp, coeffs, payload })
}

fn check_order(f: &Field, v: &[GfElement]) -> Result<()> {
    match v.iter().find(|e| e.order() != f.order()) {
        Some(e) => Err(GaloisError::OrderMismatch(f.order(), e.order()).into()),
        None => Ok(()),
    }
}

/// Recombines every buffered packet with stamp `stamp` using fresh random
/// local coefficients.
pub fn recombine<R: Rng + ?Sized>(
    buf: &Buffer,
    stamp: u64,
    field: &Field,
    draw: CoefficientDraw,
    rng: &mut R,
) -> Result<Packet> {
    let group = buf.group(stamp);
    if group.is_empty() {
        return Err(RlncError::NoPackets(stamp));
    }
    let local: Vec<GfElement> = group
        .iter()
        .map(|_| match draw {
            CoefficientDraw::Uniform => field.random(rng),
            CoefficientDraw::NonZero => field.random_nonzero(rng),
        })
        .collect();
    combine(group, &local)
}

/// Attempts to recover, at terminal `t`, the data of every source it wants.
pub fn try_decode(
    received: &[Packet],
    t: u32,
    flows: &FlowSpec,
) -> Result<BTreeMap<u32, Vec<GfElement>>> {
    let wanted = flows.sources_for(t);
    if wanted.is_empty() {
        return Err(RlncError::NotATerminal(t));
    }
    let Some(first) = received.first() else {
        return Err(RlncError::MissingSource(wanted[0]));
    };
    if received.iter().any(|p| p.stamp != first.stamp) {
        return Err(RlncError::MixedStamps);
    }
    let n = flows.num_sources();
    let l = first.payload.len();
    if received.iter().any(|p| p.coeffs.len() != n || p.payload.len() != l) {
        return Err(RlncError::Shape("coefficient or payload length"));
    }
    let order = first.coeffs.first().map_or(galois::DEFAULT_ORDER, |c| c.order());

    let rows: Vec<Vec<GfElement>> = received.iter().map(|p| p.coeffs.clone()).collect();
    let c = GfMatrix::from_rows(order, &rows)?;
    let nonzero_cols: Vec<usize> =
        (0..n).filter(|&j| c.column(j).iter().any(|e| !e.is_zero())).collect();

    for &h in &wanted {
        let j = flows.index_of(h).expect("wanted source is in the flow spec");
        if !nonzero_cols.contains(&j) {
            return Err(RlncError::MissingSource(h));
        }
    }

    let pruned = c.select_columns(&nonzero_cols);
    let rank = pruned.rank();
    if rank < nonzero_cols.len() {
        return Err(RlncError::RankDeficient { rank, needed: nonzero_cols.len() });
    }
    let y_rows: Vec<Vec<GfElement>> = received.iter().map(|p| p.payload.clone()).collect();
    let y = if l == 0 {
        GfMatrix::zeros(order, received.len(), 0)
    } else {
        GfMatrix::from_rows(order, &y_rows)?
    };
    let x = pruned.solve_matrix(&y).map_err(|e| match e {
        GaloisError::Singular { rank, needed } => RlncError::RankDeficient { rank, needed },
        other => other.into(),
    })?;

    Ok(wanted
        .into_iter()
        .map(|h| {
            let j = flows.index_of(h).expect("known source");
            let row = nonzero_cols.iter().position(|&c| c == j).expect("nonzero column");
            (h, x.row(row).to_vec())
        })
        .collect())
}

/// Fraction of packets whose terminal set is the full terminal union.
/// Zero for an empty collection.
pub fn anonymity_index<'a, I>(packets: I, flows: &FlowSpec) -> f64
where
    I: IntoIterator<Item = &'a Packet>,
{
    let all = flows.all_terminals();
    let (mut hit, mut total) = (0usize, 0usize);
    for p in packets {
        total += 1;
        if terminal_set(p, flows) == *all {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Node value: decreasing in the distance to the neighbour and in the mean hop
/// count from the neighbour to the targeted terminals.
pub fn node_value<F>(distance: f64, terminals: &BTreeSet<u32>, hops_to: F) -> f64
where
    F: Fn(u32) -> u32,
{
    if terminals.is_empty() {
        return -distance;
    }
    let mean_hops = terminals.iter().map(|&t| hops_to(t) as f64).sum::<f64>() / terminals.len() as f64;
    -(distance + mean_hops)
}

/// Node value of a relay for packet `p`: the terminals it targets are
/// `terminal_set(p)` rather than one flow's terminals.
pub fn packet_node_value<F>(p: &Packet, flows: &FlowSpec, distance: f64, hops_to: F) -> f64
where
    F: Fn(u32) -> u32,
{
    node_value(distance, &terminal_set(p, flows), hops_to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn g(v: u8) -> GfElement {
        GfElement::gf256(v)
    }

    fn two_flows() -> FlowSpec {
        FlowSpec::from_pairs([(1, vec![10]), (2, vec![20])]).unwrap()
    }

    fn data(seed: u8, len: usize) -> Vec<GfElement> {
        (0..len).map(|i| g(seed.wrapping_mul(31).wrapping_add(i as u8))).collect()
    }

    #[test]
    fn source_packets_are_unit_vectors() {
        let flows = FlowSpec::from_pairs([(1, vec![10]), (2, vec![20]), (3, vec![30])]).unwrap();
        let p = encode_source(&flows, 1, data(1, 4), 0).unwrap();
        assert_eq!(p.coeffs, vec![g(1), g(0), g(0)]);
        assert!(p.is_pure_source());
        let q = encode_source(&flows, 2, data(2, 4), 3).unwrap();
        assert_eq!(q.coeffs, vec![g(0), g(1), g(0)]);
        assert_eq!(q.stamp, 3);
        assert_eq!(encode_source(&flows, 9, data(2, 4), 0), Err(RlncError::UnknownSource(9)));
    }

    #[test]
    fn single_source_round_trip() {
        let flows = two_flows();
        let d = data(5, 32);
        let p = encode_source(&flows, 1, d.clone(), 0).unwrap();
        let out = try_decode(&[p], 10, &flows).unwrap();
        assert_eq!(out[&1], d);
    }

    #[test]
    fn forced_unit_coefficient_is_identity() {
        let flows = two_flows();
        let p = encode_source(&flows, 2, data(3, 8), 4).unwrap();
        assert_eq!(combine(std::slice::from_ref(&p), &[g(1)]).unwrap(), p);
    }

    #[test]
    fn two_sources_mix_to_local_coefficients() {
        let flows = two_flows();
        let p1 = encode_source(&flows, 1, data(1, 8), 0).unwrap();
        let p2 = encode_source(&flows, 2, data(2, 8), 0).unwrap();
        let mixed = combine(&[p1.clone(), p2.clone()], &[g(0x35), g(0xC2)]).unwrap();
        assert_eq!(mixed.coeffs, vec![g(0x35), g(0xC2)]);
        // Payload rebuilt symbol by symbol with the peasant oracle.
        for i in 0..8 {
            let want = galois::peasant_mul(0x35, p1.payload[i].value() as u32, 0x11B, 8)
                ^ galois::peasant_mul(0xC2, p2.payload[i].value() as u32, 0x11B, 8);
            assert_eq!(mixed.payload[i].value() as u32, want);
        }
    }

    #[test]
    fn recombine_needs_a_group() {
        let buf = Buffer::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = recombine(&buf, 3, galois::default_field(), CoefficientDraw::Uniform, &mut rng);
        assert_eq!(err, Err(RlncError::NoPackets(3)));
    }

    #[test]
    fn terminal_set_examples() {
        let flows = FlowSpec::from_pairs([(1, vec![10, 11]), (2, vec![20])]).unwrap();
        let p1 = encode_source(&flows, 1, data(1, 2), 0).unwrap();
        assert_eq!(terminal_set(&p1, &flows), BTreeSet::from([10, 11]));
        let zero = Packet { stamp: 0, coeffs: vec![g(0), g(0)], payload: data(0, 2) };
        assert!(terminal_set(&zero, &flows).is_empty());
        let mixed = Packet { stamp: 0, coeffs: vec![g(7), g(9)], payload: data(0, 2) };
        assert_eq!(terminal_set(&mixed, &flows), BTreeSet::from([10, 11, 20]));
    }

    #[test]
    fn duplicate_mixed_packets_are_rank_deficient() {
        let flows = FlowSpec::from_pairs([(1, vec![10]), (2, vec![10])]).unwrap();
        let p1 = encode_source(&flows, 1, data(1, 4), 0).unwrap();
        let p2 = encode_source(&flows, 2, data(2, 4), 0).unwrap();
        let m = combine(&[p1, p2], &[g(3), g(5)]).unwrap();
        let err = try_decode(&[m.clone(), m], 10, &flows).unwrap_err();
        assert_eq!(err, RlncError::RankDeficient { rank: 1, needed: 2 });
    }

    #[test]
    fn missing_source_is_reported() {
        let flows = FlowSpec::from_pairs([(1, vec![10]), (2, vec![10])]).unwrap();
        let p1 = encode_source(&flows, 1, data(1, 4), 0).unwrap();
        assert_eq!(try_decode(&[p1], 10, &flows), Err(RlncError::MissingSource(2)));
        assert_eq!(try_decode(&[], 10, &flows), Err(RlncError::MissingSource(1)));
        assert_eq!(try_decode(&[], 99, &flows), Err(RlncError::NotATerminal(99)));
    }

    #[test]
    fn buffer_prunes_expired_stamps() {
        let flows = two_flows();
        let mut buf = Buffer::new(2);
        for s in 0..5 {
            buf.push(encode_source(&flows, 1, data(s as u8, 2), s).unwrap());
        }
        assert_eq!(buf.prune(4), 2);
        assert_eq!(buf.oldest_stamp(), Some(2));
        assert_eq!(buf.newest_stamp(), Some(4));
        assert!(buf.packets().all(|p| 4 - p.stamp <= 2));
    }

    #[test]
    fn anonymity_extremes() {
        let flows = two_flows();
        let pure: Vec<_> =
            (1..=2).map(|h| encode_source(&flows, h, data(h as u8, 2), 0).unwrap()).collect();
        assert_eq!(anonymity_index(&pure, &flows), 0.0);
        let full = vec![Packet { stamp: 0, coeffs: vec![g(1), g(2)], payload: data(0, 2) }; 3];
        assert_eq!(anonymity_index(&full, &flows), 1.0);
        assert_eq!(anonymity_index(&[], &flows), 0.0);
    }

    #[test]
    fn log_line_format() {
        let p = Packet { stamp: 7, coeffs: vec![g(0x0A), g(0xFF)], payload: vec![] };
        let line = p.log_line();
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts[0], "7");
        assert_eq!(parts[1], "0aff");
        // SHA-256 of the empty string.
        assert_eq!(parts[2], "e3b0c44298fc1c14");
    }

    #[test]
    fn fully_mixed_packets_decouple_node_value() {
        let flows = FlowSpec::from_pairs([(1, vec![10]), (2, vec![20, 21])]).unwrap();
        let p = Packet { stamp: 0, coeffs: vec![g(4), g(9)], payload: data(0, 2) };
        assert_eq!(anonymity_index([&p], &flows), 1.0);
        assert_eq!(terminal_set(&p, &flows), *flows.all_terminals());
        let hops = |t: u32| t / 10;
        // Whichever flow the relay would have served, the targeted set is T.
        let v = packet_node_value(&p, &flows, 3.0, hops);
        assert_eq!(v, node_value(3.0, flows.all_terminals(), hops));
        assert_ne!(v, node_value(3.0, flows.terminals_of(1).unwrap(), hops));
    }
}

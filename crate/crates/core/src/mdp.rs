//! Per-node range-control MDP and its value-iteration solver.
//!
//! States are expected effective-neighbour counts `1..=s_max`; actions are
//! signed changes of the coverage measure (area, so that `lambda * a` is an
//! expected node count). Kernel rows are indexed from 0 for state 1.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub const DEFAULT_EPSILON: f64 = 0.01;
const ITERATION_CAP: usize = 1_000_000;
const TIE_TOL: f64 = 1e-12;
const U_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("link failure rate {0} outside [0, 1)")]
    Beta(f64),
    #[error("discount factor {0} outside [0, 1)")]
    Rho(f64),
    #[error("weight omega {0} outside [0, 1]")]
    Omega(f64),
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("node density must be positive, got {0}")]
    Lambda(f64),
    #[error("state space needs at least one state")]
    EmptyStates,
    #[error("action grid must contain 0 and be symmetric about it")]
    ActionGrid,
    #[error("state {0} outside 1..={1}")]
    State(usize, usize),
    #[error("action {0} not in the action grid")]
    Action(f64),
    #[error("shrink by {a} needs a reference coverage above it, have {range}")]
    ShrinkTooLarge { a: f64, range: f64 },
    #[error("state {0} has no feasible action")]
    NoFeasibleAction(usize),
    #[error("gamma is not strictly increasing at state {0}")]
    Gamma(usize),
    #[error("value iteration did not converge in {0} sweeps")]
    NotConverged(usize),
    #[error("policy length {found} does not match {expected} states")]
    PolicyShape { expected: usize, found: usize },
    #[error("malformed policy text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T, E = MdpError> = std::result::Result<T, E>;

/// Raw in-range count behind `s` effective nodes: `ceil(s / (1 - beta))`.
pub fn effective_to_raw(s: usize, beta: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&beta) {
        return Err(MdpError::Beta(beta));
    }
    // Guard against 4/0.8 landing a hair above 5.
    Ok((s as f64 / (1.0 - beta) - 1e-9).ceil().max(0.0) as usize)
}

/// Throughput shape, strictly increasing and concave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Log2,
    Sqrt,
    /// Linear up to `knee`, then a shallow 0.05 slope.
    CappedLinear { knee: f64 },
}

impl Gamma {
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Gamma::Log2 => (1.0 + s).log2(),
            Gamma::Sqrt => s.sqrt(),
            Gamma::CappedLinear { knee } => {
                if s <= knee {
                    s
                } else {
                    knee + 0.05 * (s - knee)
                }
            }
        }
    }

    pub fn name(self) -> String {
        match self {
            Gamma::Log2 => "log".into(),
            Gamma::Sqrt => "sqrt".into(),
            Gamma::CappedLinear { knee } => format!("capped-linear:{knee}"),
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "log" | "log2" => Some(Gamma::Log2),
            "sqrt" => Some(Gamma::Sqrt),
            _ => {
                let knee = text.strip_prefix("capped-linear:")?.parse().ok()?;
                Some(Gamma::CappedLinear { knee })
            }
        }
    }
}

/// Coverage measure the shrink kernel scales against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeRef {
    /// The coverage that holds `xi(s)` nodes on average, `xi(s) / lambda`.
    StateImplied,
    Fixed(f64),
}

/// Inputs for [`MdpModel::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct MdpParams {
    pub s_max: usize,
    pub actions: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub omega: f64,
    /// `None` picks the smallest offset keeping every utility nonnegative.
    pub u: Option<f64>,
    pub rho: f64,
    pub gamma: Gamma,
    /// Multiplies gamma.
    pub gamma_scale: f64,
    pub range_ref: RangeRef,
    /// Shrinks that would leave less coverage than this are infeasible in
    /// the solver. `None` means `xi(1) / lambda`.
    pub min_coverage: Option<f64>,
}

impl Default for MdpParams {
    fn default() -> Self {
        Self {
            s_max: 20,
            actions: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            lambda: 0.8,
            beta: 0.0,
            omega: 0.5,
            u: None,
            rho: 0.5,
            gamma: Gamma::Log2,
            gamma_scale: 1.0,
            range_ref: RangeRef::StateImplied,
            min_coverage: None,
        }
    }
}

/// Symmetric integer action grid `-k..=k`.
pub fn symmetric_actions(count: usize) -> Vec<f64> {
    let k = (count / 2) as i64;
    (-k..=k).map(|a| a as f64).collect()
}

#[derive(Debug, Clone)]
pub struct MdpModel {
    params: MdpParams,
    u: f64,
    min_coverage: f64,
    // rows[s-1][ai] is the kernel row if the action is feasible there.
    rows: Vec<Vec<Option<Vec<f64>>>>,
    expected_u: Vec<Vec<f64>>,
}

impl MdpModel {
    pub fn new(params: MdpParams) -> Result<Self> {
        validate(&params)?;
        let min_coverage = match params.min_coverage {
            Some(c) => c,
            None => effective_to_raw(1, params.beta)? as f64 / params.lambda,
        };
        let mut model = Self { params, u: 0.0, min_coverage, rows: Vec::new(), expected_u: Vec::new() };
        model.u = match model.params.u {
            Some(u) => u,
            None => model.default_u(),
        };

        let n = model.params.s_max;
        for s in 1..=n {
            let mut row = Vec::with_capacity(model.params.actions.len());
            for &a in &model.params.actions {
                row.push(if model.feasible(s, a) { Some(model.transition(s, a)?) } else { None });
            }
            if row.iter().all(Option::is_none) {
                return Err(MdpError::NoFeasibleAction(s));
            }
            model.rows.push(row);
        }
        model.expected_u = (1..=n)
            .map(|s| {
                model.params.actions.iter().enumerate().map(|(ai, &a)| match &model.rows[s - 1][ai] {
                    Some(p) => p.iter().enumerate().map(|(j, &pj)| pj * model.utility(s, a, j + 1)).sum(),
                    None => f64::NEG_INFINITY,
                })
                .collect()
            })
            .collect();
        Ok(model)
    }

    pub fn params(&self) -> &MdpParams {
        &self.params
    }

    pub fn num_states(&self) -> usize {
        self.params.s_max
    }

    pub fn actions(&self) -> &[f64] {
        &self.params.actions
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn min_coverage(&self) -> f64 {
        self.min_coverage
    }

    /// Same model with another discount factor.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        let mut p = self.params.clone();
        p.rho = rho;
        p.u = Some(self.u);
        Self::new(p)
    }

    pub fn gamma(&self, s: usize) -> f64 {
        self.params.gamma_scale * self.params.gamma.eval(s as f64)
    }

    pub fn xi(&self, s: usize) -> usize {
        effective_to_raw(s, self.params.beta).expect("beta validated")
    }

    /// Reference coverage for the shrink kernel at state `s`.
    pub fn range_at(&self, s: usize) -> f64 {
        match self.params.range_ref {
            RangeRef::StateImplied => self.xi(s) as f64 / self.params.lambda,
            RangeRef::Fixed(r) => r,
        }
    }

    /// Whether the solver may pick `a` at `s`.
    pub fn feasible(&self, s: usize, a: f64) -> bool {
        a >= 0.0 || self.range_at(s) - a.abs() >= self.min_coverage - 1e-12
    }

    fn action_index(&self, a: f64) -> Result<usize> {
        self.params.actions.iter().position(|&x| x == a).ok_or(MdpError::Action(a))
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s == 0 || s > self.params.s_max {
            Err(MdpError::State(s, self.params.s_max))
        } else {
            Ok(())
        }
    }

    /// Distribution of the next state, entry `j` for state `j + 1`.
    pub fn transition(&self, s: usize, a: f64) -> Result<Vec<f64>> {
        self.transition_with_range(s, a, self.range_at(s))
    }

    /// As [`transition`](Self::transition) with an explicit reference coverage
    /// for shrink actions.
    pub fn transition_with_range(&self, s: usize, a: f64, range: f64) -> Result<Vec<f64>> {
        self.check_state(s)?;
        if !a.is_finite() {
            return Err(MdpError::Action(a));
        }
        let n = self.params.s_max;
        let xi = self.xi(s);
        let mut row = vec![0.0; n];
        if a == 0.0 {
            row[s - 1] = 1.0;
            return Ok(row);
        }
        if a > 0.0 {
            let mean = self.params.lambda * a;
            for sp in s..n {
                row[sp - 1] = poisson_pmf(self.xi(sp) - xi, mean);
            }
            // Everything at or past xi(s_max) lumps into the top state.
            let below: f64 = (0..self.xi(n) - xi).map(|k| poisson_pmf(k, mean)).sum();
            row[n - 1] += (1.0 - below).max(0.0);
        } else {
            let shrink = a.abs();
            if shrink >= range {
                return Err(MdpError::ShrinkTooLarge { a: shrink, range });
            }
            let keep = 1.0 - shrink / range;
            for sp in 2..=s {
                row[sp - 1] = binomial_pmf(xi, self.xi(sp), keep);
            }
            // Anything down to xi(1) nodes lumps into state 1.
            row[0] += (0..=self.xi(1).min(xi)).map(|k| binomial_pmf(xi, k, keep)).sum::<f64>();
        }
        // With beta > 0 the xi lattice skips raw counts; renormalise.
        let total: f64 = row.iter().sum();
        for p in &mut row {
            *p /= total;
        }
        Ok(row)
    }

    /// `u + omega * (gamma(s') - gamma(s)) - (1 - omega) * a`.
    pub fn utility(&self, s: usize, a: f64, s_next: usize) -> f64 {
        let w = self.params.omega;
        self.u + w * (self.gamma(s_next) - self.gamma(s)) - (1.0 - w) * a
    }

    fn default_u(&self) -> f64 {
        let n = self.params.s_max;
        let w = self.params.omega;
        let g_lo = self.gamma(1);
        let g_hi = self.gamma(n);
        let worst = self
            .params
            .actions
            .iter()
            .flat_map(|&a| (1..=n).map(move |s| (s, a)))
            .map(|(s, a)| {
                let g = self.gamma(s);
                // Most negative reward over every successor.
                let r = (w * (g_lo - g)).min(w * (g_hi - g));
                r - (1.0 - w) * a
            })
            .fold(f64::INFINITY, f64::min);
        (-worst).max(0.0) + U_MARGIN
    }

    /// Kernel row cached at construction, `None` when infeasible.
    pub fn row(&self, s: usize, ai: usize) -> Option<&[f64]> {
        self.rows[s - 1][ai].as_deref()
    }

    /// Expected one-step utility of action index `ai` at `s`.
    pub fn expected_utility(&self, s: usize, ai: usize) -> f64 {
        self.expected_u[s - 1][ai]
    }

    /// Action-values at `s` given `v`, `-inf` for infeasible actions.
    pub fn q_values(&self, v: &[f64], s: usize) -> Vec<f64> {
        let rho = self.params.rho;
        (0..self.params.actions.len())
            .map(|ai| match self.row(s, ai) {
                Some(p) => self.expected_utility(s, ai) + rho * dot(p, v),
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    /// Action indices in tie-break order: smaller magnitude first, then
    /// shrink before grow.
    fn preference_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.params.actions.len()).collect();
        let acts = &self.params.actions;
        idx.sort_by(|&i, &j| {
            let (a, b) = (acts[i], acts[j]);
            a.abs().total_cmp(&b.abs()).then((a > 0.0).cmp(&(b > 0.0)))
        });
        idx
    }

    fn argmax(&self, scores: &[f64]) -> usize {
        let mut best: Option<(usize, f64)> = None;
        for ai in self.preference_order() {
            let q = scores[ai];
            if q == f64::NEG_INFINITY {
                continue;
            }
            match best {
                Some((_, b)) if q <= b + TIE_TOL * b.abs().max(1.0) => {}
                _ => best = Some((ai, q)),
            }
        }
        best.expect("every state has a feasible action").0
    }

    /// Greedy action per state with respect to `v`.
    pub fn greedy(&self, v: &[f64]) -> Vec<f64> {
        (1..=self.params.s_max)
            .map(|s| self.params.actions[self.argmax(&self.q_values(v, s))])
            .collect()
    }
}

fn validate(p: &MdpParams) -> Result<()> {
    if !(0.0..1.0).contains(&p.beta) {
        return Err(MdpError::Beta(p.beta));
    }
    if !(0.0..1.0).contains(&p.rho) {
        return Err(MdpError::Rho(p.rho));
    }
    if !(0.0..=1.0).contains(&p.omega) {
        return Err(MdpError::Omega(p.omega));
    }
    if !(p.lambda > 0.0 && p.lambda.is_finite()) {
        return Err(MdpError::Lambda(p.lambda));
    }
    if p.s_max == 0 {
        return Err(MdpError::EmptyStates);
    }
    let mut sorted = p.actions.clone();
    sorted.sort_by(f64::total_cmp);
    let symmetric = sorted.iter().zip(sorted.iter().rev()).all(|(a, b)| a == &-b);
    if !sorted.contains(&0.0) || !symmetric || sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(MdpError::ActionGrid);
    }
    for s in 1..p.s_max {
        let g = |x: usize| p.gamma_scale * p.gamma.eval(x as f64);
        if g(s + 1) <= g(s) {
            return Err(MdpError::Gamma(s));
        }
    }
    Ok(())
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub(crate) fn poisson_pmf(k: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k)).exp()
}

pub(crate) fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_c = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    (ln_c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One application of the Bellman optimality operator.
pub fn bellman_backup(v: &[f64], model: &MdpModel) -> Vec<f64> {
    assert_eq!(v.len(), model.num_states(), "one value per state");
    (1..=model.num_states())
        .map(|s| model.q_values(v, s).into_iter().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    /// Action for state `i + 1`.
    pub actions: Vec<f64>,
    pub value: Vec<f64>,
    pub epsilon: f64,
    pub rho: f64,
    pub iterations: usize,
}

impl Policy {
    pub fn action(&self, s: usize) -> f64 {
        self.actions[s.clamp(1, self.actions.len()) - 1]
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# state action value\n");
        let _ = writeln!(out, "epsilon {}", self.epsilon);
        let _ = writeln!(out, "rho {}", self.rho);
        let _ = writeln!(out, "iterations {}", self.iterations);
        for (i, (a, v)) in self.actions.iter().zip(&self.value).enumerate() {
            let _ = writeln!(out, "{} {} {}", i + 1, a, v);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Policy { actions: vec![], value: vec![], epsilon: 0.0, rho: 0.0, iterations: 0 };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| MdpError::Parse { line: n + 1, reason: reason.into() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["epsilon", x] => p.epsilon = x.parse().map_err(|_| err("epsilon"))?,
                ["rho", x] => p.rho = x.parse().map_err(|_| err("rho"))?,
                ["iterations", x] => p.iterations = x.parse().map_err(|_| err("iterations"))?,
                [s, a, v] => {
                    let s: usize = s.parse().map_err(|_| err("state"))?;
                    if s != p.actions.len() + 1 {
                        return Err(err("states must be listed in order from 1"));
                    }
                    p.actions.push(a.parse().map_err(|_| err("action"))?);
                    p.value.push(v.parse().map_err(|_| err("value"))?);
                }
                _ => return Err(err("unrecognised line")),
            }
        }
        if p.actions.is_empty() {
            return Err(MdpError::Parse { line: 0, reason: "no states".into() });
        }
        Ok(p)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Sup-norm change below which value iteration stops.
pub fn stopping_threshold(rho: f64, epsilon: f64) -> f64 {
    if rho == 0.0 {
        f64::INFINITY
    } else {
        (1.0 - rho) / (2.0 * rho) * epsilon
    }
}

/// Value iteration from `V = 0` with the epsilon stopping rule; the returned
/// policy is greedy in the final value vector.
pub fn solve_policy(model: &MdpModel, epsilon: f64) -> Result<Policy> {
    if !(epsilon > 0.0) {
        return Err(MdpError::Epsilon(epsilon));
    }
    let rho = model.rho();
    let threshold = stopping_threshold(rho, epsilon);
    let mut v = vec![0.0; model.num_states()];
    for it in 1..=ITERATION_CAP {
        let next = bellman_backup(&v, model);
        let delta = sup_dist(&next, &v);
        v = next;
        if delta <= threshold {
            return Ok(Policy { actions: model.greedy(&v), value: v, epsilon, rho, iterations: it });
        }
    }
    Err(MdpError::NotConverged(ITERATION_CAP))
}

/// Best expected immediate utility per state, ignoring the future.
pub fn myopic_policy(model: &MdpModel) -> Policy {
    let n = model.num_states();
    let na = model.actions().len();
    let mut actions = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for s in 1..=n {
        let scores: Vec<f64> = (0..na).map(|ai| model.expected_utility(s, ai)).collect();
        let ai = model.argmax(&scores);
        actions.push(model.actions()[ai]);
        value.push(scores[ai]);
    }
    Policy { actions, value, epsilon: 0.0, rho: 0.0, iterations: 1 }
}

/// Exact value of a stationary policy: solves `(I - rho P) V = U`.
pub fn evaluate_policy(model: &MdpModel, actions: &[f64]) -> Result<Vec<f64>> {
    let n = model.num_states();
    if actions.len() != n {
        return Err(MdpError::PolicyShape { expected: n, found: actions.len() });
    }
    let rho = model.rho();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for s in 1..=n {
        let ai = model.action_index(actions[s - 1])?;
        let row = model
            .row(s, ai)
            .ok_or(MdpError::ShrinkTooLarge { a: actions[s - 1].abs(), range: model.range_at(s) })?;
        for (j, &p) in row.iter().enumerate() {
            m[(s - 1, j)] -= rho * p;
        }
        rhs[s - 1] = model.expected_utility(s, ai);
    }
    let sol = m.lu().solve(&rhs).expect("I - rho P is nonsingular for rho < 1");
    Ok(sol.iter().copied().collect())
}

pub fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn model(beta: f64, rho: f64) -> MdpModel {
        MdpModel::new(MdpParams { beta, rho, ..Default::default() }).unwrap()
    }

    #[test]
    fn raw_count_examples() {
        assert_eq!(effective_to_raw(4, 0.0).unwrap(), 4);
        assert_eq!(effective_to_raw(4, 0.2).unwrap(), 5);
        assert_eq!(effective_to_raw(3, 0.3).unwrap(), 5);
        assert!(effective_to_raw(3, 1.0).is_err());
    }

    #[test]
    fn zero_action_is_a_point_mass() {
        let m = model(0.1, 0.5);
        for s in 1..=20 {
            let row = m.transition(s, 0.0).unwrap();
            assert_eq!(row[s - 1], 1.0);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn poisson_and_binomial_pmfs() {
        assert_abs_diff_eq!(poisson_pmf(0, 0.8), (-0.8f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!((-0.8f64).exp(), 0.4493, epsilon = 1e-4);
        assert_abs_diff_eq!(binomial_pmf(4, 2, 0.5), 0.375, epsilon = 1e-15);
    }

    #[test]
    fn grow_row_before_renormalisation() {
        // beta = 0 leaves the row unnormalised apart from the top lump.
        let m = MdpModel::new(MdpParams { s_max: 60, ..Default::default() }).unwrap();
        let row = m.transition(5, 1.0).unwrap();
        assert_abs_diff_eq!(row[4], (-0.8f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn shrink_needs_room() {
        let m = model(0.0, 0.5);
        assert!(matches!(m.transition_with_range(4, -2.0, 2.0), Err(MdpError::ShrinkTooLarge { .. })));
        // Four nodes, half the coverage removed.
        let row = m.transition_with_range(4, -2.0, 4.0).unwrap();
        assert_abs_diff_eq!(row[1], 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(row[0], binomial_pmf(4, 0, 0.5) + binomial_pmf(4, 1, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn utility_examples() {
        let m = MdpModel::new(MdpParams { omega: 0.53, u: Some(0.2), ..Default::default() }).unwrap();
        assert_eq!(m.utility(7, 0.0, 7), 0.2);
        let want = 0.2 + 0.53 * (6f64.log2() - 4f64.log2()) - 0.47;
        assert_abs_diff_eq!(m.utility(3, 1.0, 5), want, epsilon = 1e-15);

        let w1 = MdpModel::new(MdpParams { omega: 1.0, u: Some(0.0), ..Default::default() }).unwrap();
        assert_eq!(w1.utility(3, 2.0, 5), w1.gamma(5) - w1.gamma(3));
    }

    #[test]
    fn default_offset_keeps_utilities_nonnegative() {
        for omega in [0.0, 0.3, 0.5, 0.9, 1.0] {
            let m = MdpModel::new(MdpParams { omega, ..Default::default() }).unwrap();
            for s in 1..=20 {
                for &a in m.actions() {
                    for sp in 1..=20 {
                        assert!(m.utility(s, a, sp) >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = |p: MdpParams| MdpModel::new(p).unwrap_err();
        assert_eq!(bad(MdpParams { rho: 1.0, ..Default::default() }), MdpError::Rho(1.0));
        assert_eq!(bad(MdpParams { beta: 1.0, ..Default::default() }), MdpError::Beta(1.0));
        assert_eq!(bad(MdpParams { actions: vec![0.0, 1.0], ..Default::default() }), MdpError::ActionGrid);
        assert_eq!(bad(MdpParams { lambda: 0.0, ..Default::default() }), MdpError::Lambda(0.0));
        assert!(solve_policy(&model(0.0, 0.5), 0.0).is_err());
    }

    #[test]
    fn rho_zero_is_one_sweep_and_myopic() {
        let m = model(0.2, 0.0);
        let p = solve_policy(&m, 0.01).unwrap();
        assert_eq!(p.iterations, 1);
        assert_eq!(p.actions, myopic_policy(&m).actions);
    }

    #[test]
    fn iterations_grow_with_rho() {
        let counts: Vec<usize> = [0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|&rho| solve_policy(&model(0.0, rho), 0.01).unwrap().iterations)
            .collect();
        assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    }

    #[test]
    fn policy_text_round_trip() {
        let p = solve_policy(&model(0.1, 0.7), 0.01).unwrap();
        let back = Policy::from_text(&p.to_text()).unwrap();
        assert_eq!(back, p);
        assert!(Policy::from_text("1 0 0\n3 0 0\n").is_err());
    }

    #[test]
    fn two_state_toy_matches_enumeration() {
        // Two states, actions {-1, 0, 1}; enumerate every feasible stationary
        // policy and pick the best by exact evaluation.
        let m = MdpModel::new(MdpParams {
            s_max: 2,
            actions: vec![-1.0, 0.0, 1.0],
            lambda: 1.0,
            omega: 0.8,
            rho: 0.6,
            range_ref: RangeRef::Fixed(3.0),
            min_coverage: Some(0.5),
            ..Default::default()
        })
        .unwrap();
        let p = solve_policy(&m, 1e-9).unwrap();
        // An optimal stationary policy attains the statewise maximum.
        let mut best_v = vec![f64::NEG_INFINITY; 2];
        for &a1 in m.actions() {
            for &a2 in m.actions() {
                let Ok(v) = evaluate_policy(&m, &[a1, a2]) else { continue };
                for (b, x) in best_v.iter_mut().zip(v) {
                    *b = b.max(x);
                }
            }
        }
        let pv = evaluate_policy(&m, &p.actions).unwrap();
        assert!(sup_dist(&pv, &best_v) < 1e-8, "{pv:?} vs {best_v:?}");
    }
}

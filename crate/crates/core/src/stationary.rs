//! Long-run behaviour of the chain a fixed policy induces on the MDP states.
//!
//! Rows whose action keeps the state put (a zero action, or a grow at the top
//! state where all mass is lumped) are absorbing. Chains where every state
//! drains into such rows are solved through the fundamental matrix; chains
//! with a strictly positive power are solved by power iteration.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::mdp::{MdpError, MdpModel, Policy};

const ROW_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-12;
const POWER_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("chain has no absorbing state that every state can reach")]
    NotAbsorbing,
    #[error("no power of the matrix is strictly positive")]
    NotErgodic,
    #[error("I - Q is singular")]
    SingularFundamental,
    #[error("power iteration did not settle in {0} steps")]
    NotConverged(usize),
    #[error("policy covers {found} states, model has {expected}")]
    Shape { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] MdpError),
}

pub type Result<T, E = ChainError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainClass {
    /// Some unit rows exist and every state reaches one.
    Absorbing,
    /// Some power of the matrix is strictly positive.
    Ergodic,
    Mixed,
}

impl ChainClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainClass::Absorbing => "absorbing",
            ChainClass::Ergodic => "ergodic",
            ChainClass::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolicyChain {
    matrix: DMatrix<f64>,
    class: ChainClass,
}

impl PolicyChain {
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c {
            return Err(ChainError::NotSquare(r, c));
        }
        for i in 0..r {
            let sum: f64 = matrix.row(i).iter().sum();
            if (sum - 1.0).abs() > ROW_TOL || matrix.row(i).iter().any(|&p| p < 0.0) {
                return Err(ChainError::NotStochastic { row: i, sum });
            }
        }
        let class = classify(&matrix);
        Ok(Self { matrix, class })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let m = DMatrix::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j]);
        Self::from_matrix(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn class(&self) -> ChainClass {
        self.class
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zero-based indices of unit-diagonal rows.
    pub fn absorbing_states(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.matrix[(i, i)] == 1.0).collect()
    }
}

/// Row `s` is the kernel row of `policy(s)` at `s`.
pub fn induce_chain(policy: &Policy, model: &MdpModel) -> Result<PolicyChain> {
    let n = model.num_states();
    if policy.num_states() != n {
        return Err(ChainError::Shape { expected: n, found: policy.num_states() });
    }
    let mut m = DMatrix::zeros(n, n);
    for s in 1..=n {
        let row = model.transition(s, policy.action(s))?;
        for (j, p) in row.into_iter().enumerate() {
            m[(s - 1, j)] = p;
        }
    }
    PolicyChain::from_matrix(m)
}

fn support(m: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = m.nrows();
    (0..n).map(|i| (0..n).map(|j| m[(i, j)] > 0.0).collect()).collect()
}

fn bool_mul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).any(|k| a[i][k] && b[k][j])).collect()).collect()
}

/// True when some power up to Wielandt's bound `(n-1)^2 + 1` is positive.
pub fn is_primitive(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    if n == 0 {
        return false;
    }
    let base = support(m);
    let mut power = base.clone();
    for _ in 0..(n - 1) * (n - 1) + 1 {
        if power.iter().flatten().all(|&b| b) {
            return true;
        }
        power = bool_mul(&power, &base);
    }
    false
}

fn reaches_absorbing(m: &DMatrix<f64>, absorbing: &[usize]) -> bool {
    let n = m.nrows();
    let sup = support(m);
    // Backward search from the absorbing set.
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = absorbing.to_vec();
    for &a in absorbing {
        seen[a] = true;
    }
    while let Some(j) = stack.pop() {
        for i in 0..n {
            if sup[i][j] && !seen[i] {
                seen[i] = true;
                stack.push(i);
            }
        }
    }
    seen.into_iter().all(|b| b)
}

pub fn classify(m: &DMatrix<f64>) -> ChainClass {
    let absorbing: Vec<usize> = (0..m.nrows()).filter(|&i| m[(i, i)] == 1.0).collect();
    if !absorbing.is_empty() && reaches_absorbing(m, &absorbing) {
        ChainClass::Absorbing
    } else if is_primitive(m) {
        ChainClass::Ergodic
    } else {
        ChainClass::Mixed
    }
}

/// Result of the fundamental-matrix analysis.
#[derive(Debug, Clone)]
pub struct AbsorbingLimit {
    pub transient: Vec<usize>,
    pub absorbing: Vec<usize>,
    /// `(I - Q)^-1` over the transient states.
    pub fundamental: DMatrix<f64>,
    /// Absorption probabilities, transient rows by absorbing columns.
    pub fr: DMatrix<f64>,
    /// Zero on transient states; on absorbing states proportional to the
    /// column sums of `fr` (uniform when there are no transient states).
    pub sigma: Vec<f64>,
    /// Limiting occupancy from a uniform start: `(colsum + 1) / n` on
    /// absorbing states.
    pub occupancy: Vec<f64>,
}

pub fn limiting_absorbing(chain: &PolicyChain) -> Result<AbsorbingLimit> {
    let m = &chain.matrix;
    let n = chain.len();
    let absorbing = chain.absorbing_states();
    if absorbing.is_empty() || !reaches_absorbing(m, &absorbing) {
        return Err(ChainError::NotAbsorbing);
    }
    let transient: Vec<usize> = (0..n).filter(|i| !absorbing.contains(i)).collect();
    let t = transient.len();
    let q = DMatrix::from_fn(t, t, |i, j| m[(transient[i], transient[j])]);
    let r = DMatrix::from_fn(t, absorbing.len(), |i, j| m[(transient[i], absorbing[j])]);
    let fundamental = (DMatrix::identity(t, t) - q).try_inverse().ok_or(ChainError::SingularFundamental)?;
    let fr = &fundamental * r;

    let colsums: Vec<f64> = (0..absorbing.len()).map(|j| fr.column(j).sum()).collect();
    let total: f64 = colsums.iter().sum();
    let mut sigma = vec![0.0; n];
    let mut occupancy = vec![0.0; n];
    for (j, &a) in absorbing.iter().enumerate() {
        sigma[a] = if total > 0.0 { colsums[j] / total } else { 1.0 / absorbing.len() as f64 };
        occupancy[a] = (colsums[j] + 1.0) / n as f64;
    }
    Ok(AbsorbingLimit { transient, absorbing, fundamental, fr, sigma, occupancy })
}

/// Stationary distribution by power iteration from the uniform vector.
pub fn limiting_ergodic(chain: &PolicyChain) -> Result<Vec<f64>> {
    if !is_primitive(&chain.matrix) {
        return Err(ChainError::NotErgodic);
    }
    power_iterate(&chain.matrix)
}

fn power_iterate(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut sigma = nalgebra::RowDVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_CAP {
        let mut next = &sigma * m;
        let total = next.sum();
        next /= total;
        let diff = (&next - &sigma).abs().max();
        sigma = next;
        if diff < POWER_TOL {
            return Ok(sigma.iter().copied().collect());
        }
    }
    Err(ChainError::NotConverged(POWER_CAP))
}

/// `P^(2^k)` by repeated squaring.
pub fn matrix_power_limit(m: &DMatrix<f64>, k: u32) -> DMatrix<f64> {
    let mut p = m.clone();
    for _ in 0..k {
        p = &p * &p;
    }
    p
}

/// `sigma * P - sigma` in the sup norm.
pub fn stationarity_residual(chain: &PolicyChain, sigma: &[f64]) -> f64 {
    let row = nalgebra::RowDVector::from_row_slice(sigma);
    (&row * &chain.matrix - &row).abs().max()
}

#[derive(Debug, Clone)]
pub struct Limit {
    pub class: ChainClass,
    pub sigma: Vec<f64>,
    pub absorbing: Option<AbsorbingLimit>,
}

/// Dispatches on the chain class. Mixed chains fall back to the uniform-start
/// occupancy of `P^(2^40)`.
pub fn limiting_distribution(chain: &PolicyChain) -> Result<Limit> {
    match chain.class {
        ChainClass::Absorbing => {
            let lim = limiting_absorbing(chain)?;
            Ok(Limit { class: chain.class, sigma: lim.sigma.clone(), absorbing: Some(lim) })
        }
        ChainClass::Ergodic => Ok(Limit { class: chain.class, sigma: limiting_ergodic(chain)?, absorbing: None }),
        ChainClass::Mixed => {
            let p = matrix_power_limit(&chain.matrix, 40);
            let n = chain.len() as f64;
            let sigma = (0..chain.len()).map(|j| p.column(j).sum() / n).collect();
            Ok(Limit { class: chain.class, sigma, absorbing: None })
        }
    }
}

/// One-based state with the largest limiting mass; ties go to the smaller.
pub fn initial_state(sigma: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in sigma.iter().enumerate() {
        if x > sigma[best] {
            best = i;
        }
    }
    best + 1
}

/// Grow states followed by shrink states, with no zero actions: returns the
/// number of leading grow states when the policy has that block shape.
pub fn canonical_split(policy: &Policy) -> Option<usize> {
    let a = &policy.actions;
    if a.iter().any(|&x| x == 0.0) {
        return None;
    }
    let k = a.iter().take_while(|&&x| x > 0.0).count();
    a[k..].iter().all(|&x| x < 0.0).then_some(k)
}

/// Plain-text report: class, matrix rows, sigma and the chosen state.
pub fn report(chain: &PolicyChain, limit: &Limit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "class {}", limit.class.as_str());
    let _ = writeln!(out, "initial_state {}", initial_state(&limit.sigma));
    if limit.class != ChainClass::Absorbing {
        let _ = writeln!(out, "residual {:e}", stationarity_residual(chain, &limit.sigma));
    }
    out.push_str("# state sigma\n");
    for (i, s) in limit.sigma.iter().enumerate() {
        let _ = writeln!(out, "{} {}", i + 1, s);
    }
    out.push_str("# matrix\n");
    for i in 0..chain.len() {
        let row: Vec<String> = chain.matrix.row(i).iter().map(|p| format!("{p:.6e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MdpParams, Policy};
    use approx::assert_abs_diff_eq;

    fn chain(rows: &[&[f64]]) -> PolicyChain {
        PolicyChain::from_rows(rows).unwrap()
    }

    #[test]
    fn two_state_absorbing() {
        let c = chain(&[&[0.5, 0.5], &[0.0, 1.0]]);
        assert_eq!(c.class(), ChainClass::Absorbing);
        let lim = limiting_absorbing(&c).unwrap();
        assert_abs_diff_eq!(lim.fundamental[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lim.fr[(0, 0)], 1.0, epsilon = 1e-15);
        assert_eq!(lim.sigma, vec![0.0, 1.0]);
        assert_eq!(initial_state(&lim.sigma), 2);
    }

    #[test]
    fn identity_is_uniform_over_absorbing() {
        let c = PolicyChain::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let lim = limiting_absorbing(&c).unwrap();
        assert_eq!(lim.sigma, vec![0.25; 4]);
        assert_eq!(initial_state(&lim.sigma), 1);
    }

    #[test]
    fn split_absorption_follows_first_step() {
        let c = chain(&[&[1.0, 0.0, 0.0], &[0.3, 0.0, 0.7], &[0.0, 0.0, 1.0]]);
        let lim = limiting_absorbing(&c).unwrap();
        assert_abs_diff_eq!(lim.sigma[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(lim.sigma[2], 0.7, epsilon = 1e-15);
        assert_eq!(lim.sigma[1], 0.0);
        assert_eq!(initial_state(&lim.sigma), 3);
    }

    #[test]
    fn ergodic_examples() {
        let c = chain(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert_eq!(c.class(), ChainClass::Ergodic);
        let s = limiting_ergodic(&c).unwrap();
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-12);

        let c = chain(&[&[0.9, 0.1], &[0.5, 0.5]]);
        let s = limiting_ergodic(&c).unwrap();
        assert_abs_diff_eq!(s[0], 5.0 / 6.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s[1], 1.0 / 6.0, epsilon = 1e-10);
        assert!(stationarity_residual(&c, &s) < 1e-9);
    }

    #[test]
    fn periodic_chain_is_neither() {
        let c = chain(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(c.class(), ChainClass::Mixed);
        assert_eq!(limiting_ergodic(&c), Err(ChainError::NotErgodic));
        let lim = limiting_distribution(&c).unwrap();
        assert_abs_diff_eq!(lim.sigma[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(matches!(
            PolicyChain::from_rows(&[&[0.5, 0.4], &[0.0, 1.0]]),
            Err(ChainError::NotStochastic { row: 0, .. })
        ));
    }

    #[test]
    fn tie_break_and_scaling() {
        assert_eq!(initial_state(&[0.0, 1.0]), 2);
        assert_eq!(initial_state(&[0.25; 4]), 1);
        let s = [0.1, 0.4, 0.4, 0.1];
        let scaled: Vec<f64> = s.iter().map(|x| x * 7.5).collect();
        assert_eq!(initial_state(&s), initial_state(&scaled));
    }

    #[test]
    fn all_hold_policy_induces_identity() {
        let model = MdpModel::new(MdpParams::default()).unwrap();
        let policy = Policy { actions: vec![0.0; 20], value: vec![0.0; 20], epsilon: 0.0, rho: 0.5, iterations: 0 };
        let c = induce_chain(&policy, &model).unwrap();
        assert_eq!(c.matrix(), &DMatrix::identity(20, 20));
        assert_eq!(c.class(), ChainClass::Absorbing);
    }

    #[test]
    fn all_grow_policy_is_upper_triangular() {
        let model = MdpModel::new(MdpParams::default()).unwrap();
        let policy = Policy { actions: vec![1.0; 20], value: vec![0.0; 20], epsilon: 0.0, rho: 0.5, iterations: 0 };
        let c = induce_chain(&policy, &model).unwrap();
        for i in 0..20 {
            for j in 0..i {
                assert_eq!(c.matrix()[(i, j)], 0.0);
            }
        }
        // The top state lumps everything and absorbs.
        assert_eq!(c.absorbing_states(), vec![19]);
        assert_eq!(c.class(), ChainClass::Absorbing);
    }

    #[test]
    fn grow_then_shrink_has_positive_square() {
        let model = MdpModel::new(MdpParams::default()).unwrap();
        let mut actions = vec![2.0; 8];
        actions.extend(vec![-1.0; 12]);
        let policy = Policy { actions, value: vec![0.0; 20], epsilon: 0.0, rho: 0.5, iterations: 0 };
        assert_eq!(canonical_split(&policy), Some(8));
        let c = induce_chain(&policy, &model).unwrap();
        assert_eq!(c.class(), ChainClass::Ergodic);
        let sigma = limiting_ergodic(&c).unwrap();
        assert!(stationarity_residual(&c, &sigma) < 1e-9);
    }
}

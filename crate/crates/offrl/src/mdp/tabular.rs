//! Exact tabular MDPs: Bellman backups, value iteration, occupancy measures,
//! and exact policy values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, QFunction, StateVec};
use crate::rng::ChaCha8Rng;

pub const DEFAULT_VI_TOL: f64 = 1e-10;
/// Occupancy solves use a direct dense solve up to this many states and fall
/// back to truncated-series accumulation beyond it.
pub const DENSE_OCCUPANCY_LIMIT: usize = 2000;

/// A finite MDP given by full reward and transition tables.
///
/// Rewards are deterministic given (s, a); an optional bounded-noise hook
/// adds truncated Gaussian noise clamped so |r| stays within `reward_bound`.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// Row-major |S| x |A|.
    rewards: Vec<f64>,
    /// Row-major |S| x |A| x |S|; each (s, a) row is a distribution.
    transitions: Vec<f64>,
    pub initial_dist: Vec<f64>,
    pub gamma: f64,
    /// Declared bound M with |r(s,a)| <= M. Not part of the JSON schema;
    /// deserialization recomputes it as max |r|.
    pub reward_bound: f64,
    /// Optional reward-noise standard deviation (default off).
    pub reward_noise_sigma: Option<f64>,
}

const ROW_SUM_TOL: f64 = 1e-12;

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        initial_dist: Vec<f64>,
        gamma: f64,
        reward_bound: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument("empty state or action space".into()));
        }
        if rewards.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "rewards has {} entries, expected {}",
                rewards.len(),
                num_states * num_actions
            )));
        }
        if transitions.len() != num_states * num_actions * num_states {
            return Err(Error::Dimension(format!(
                "transitions has {} entries, expected {}",
                transitions.len(),
                num_states * num_actions * num_states
            )));
        }
        if initial_dist.len() != num_states {
            return Err(Error::Dimension(format!(
                "initial_dist has {} entries, expected {num_states}",
                initial_dist.len()
            )));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("gamma {gamma} not in [0,1)")));
        }
        if reward_bound <= 0.0 || rewards.iter().any(|r| !r.is_finite() || r.abs() > reward_bound) {
            return Err(Error::InvalidArgument(format!(
                "rewards must be finite with |r| <= {reward_bound}"
            )));
        }
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = &transitions[(s * num_actions + a) * num_states..][..num_states];
                if row.iter().any(|p| *p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "negative transition probability at (s={s}, a={a})"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "transition row (s={s}, a={a}) sums to {sum}, expected 1"
                    )));
                }
            }
        }
        let init_sum: f64 = initial_dist.iter().sum();
        if initial_dist.iter().any(|p| *p < 0.0) || (init_sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "initial distribution sums to {init_sum}, expected 1"
            )));
        }
        Ok(TabularMdp {
            num_states,
            num_actions,
            rewards,
            transitions,
            initial_dist,
            gamma,
            reward_bound,
            reward_noise_sigma: None,
        })
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[(s * self.num_actions + a) * self.num_states..][..self.num_states]
    }

    pub fn with_reward_noise(mut self, sigma: f64) -> Self {
        self.reward_noise_sigma = Some(sigma);
        self
    }

    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> StateVec {
        StateVec::from_index(sample_categorical(&self.initial_dist, rng))
    }

    pub fn sample_step(&self, s: &StateVec, a: ActionId, rng: &mut ChaCha8Rng) -> (f64, StateVec) {
        let si = s.index();
        let mut r = self.reward(si, a.0);
        if let Some(sigma) = self.reward_noise_sigma {
            use rand_distr::Distribution;
            let noise: f64 = rand_distr::Normal::new(0.0, sigma).expect("valid sigma").sample(rng);
            r = (r + noise).clamp(-self.reward_bound, self.reward_bound);
        }
        let next = sample_categorical(self.transition_row(si, a.0), rng);
        (r, StateVec::from_index(next))
    }

    /// JSON document with fields `num_states, num_actions, rewards,
    /// transitions, initial_dist, gamma` (tables row-major). Round-trips are
    /// bit-stable for finite doubles.
    pub fn to_json(&self) -> String {
        let doc = TabularMdpJson {
            num_states: self.num_states,
            num_actions: self.num_actions,
            rewards: self.rewards.clone(),
            transitions: self.transitions.clone(),
            initial_dist: self.initial_dist.clone(),
            gamma: self.gamma,
        };
        serde_json::to_string(&doc).expect("tabular MDP serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TabularMdpJson =
            serde_json::from_str(text).map_err(|e| Error::Data(format!("tabular MDP json: {e}")))?;
        let bound = doc
            .rewards
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.abs()))
            .max(f64::MIN_POSITIVE);
        TabularMdp::new(
            doc.num_states,
            doc.num_actions,
            doc.rewards,
            doc.transitions,
            doc.initial_dist,
            doc.gamma,
            bound,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct TabularMdpJson {
    num_states: usize,
    num_actions: usize,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    initial_dist: Vec<f64>,
    gamma: f64,
}

fn sample_categorical(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    use rand::Rng;
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Q-values on a finite state-action grid, row-major |S| x |A|.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularQFunction {
    pub num_states: usize,
    pub num_actions: usize,
    values: Vec<f64>,
}

impl TabularQFunction {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        TabularQFunction { num_states, num_actions, values: vec![0.0; num_states * num_actions] }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "q table has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        Ok(TabularQFunction { num_states, num_actions, values })
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_at(&self, s: usize) -> f64 {
        (0..self.num_actions).map(|a| self.get(s, a)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup-norm distance to another table of the same shape.
    pub fn sup_distance(&self, other: &TabularQFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl QFunction for TabularQFunction {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn value(&self, s: &StateVec, a: ActionId) -> f64 {
        self.get(s.index(), a.0)
    }
}

/// One application of the Bellman optimality operator:
/// (Tf)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) max_a' f(s',a').
pub fn bellman_backup(mdp: &TabularMdp, f: &TabularQFunction) -> Result<TabularQFunction> {
    if f.num_states != mdp.num_states || f.num_actions != mdp.num_actions {
        return Err(Error::Dimension(format!(
            "q table is {}x{}, mdp is {}x{}",
            f.num_states, f.num_actions, mdp.num_states, mdp.num_actions
        )));
    }
    let maxes: Vec<f64> = (0..mdp.num_states).map(|s| f.max_at(s)).collect();
    let mut out = TabularQFunction::zeros(mdp.num_states, mdp.num_actions);
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let row = mdp.transition_row(s, a);
            let cont: f64 = row.iter().zip(&maxes).map(|(p, m)| p * m).sum();
            out.set(s, a, mdp.reward(s, a) + mdp.gamma * cont);
        }
    }
    Ok(out)
}

/// Fixed-point iteration for Q*: stops once the Bellman residual
/// ||Q - TQ||_inf falls below `tol`, which bounds ||Q - Q*||_inf by
/// tol / (1 - gamma).
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iters: usize) -> Result<TabularQFunction> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let mut q = TabularQFunction::zeros(mdp.num_states, mdp.num_actions);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = bellman_backup(mdp, &q)?;
        residual = q.sup_distance(&next);
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(Error::Convergence { iterations: max_iters, residual })
}

/// Value iteration at the default tolerance with the iteration cap implied
/// by the contraction rate.
pub fn value_iteration_default(mdp: &TabularMdp) -> Result<TabularQFunction> {
    value_iteration(mdp, DEFAULT_VI_TOL, default_vi_iters(mdp, DEFAULT_VI_TOL))
}

pub fn default_vi_iters(mdp: &TabularMdp, tol: f64) -> usize {
    if mdp.gamma == 0.0 {
        return 2;
    }
    let m = mdp.reward_bound.max(f64::MIN_POSITIVE);
    let needed = (tol * (1.0 - mdp.gamma) / (2.0 * m)).ln() / mdp.gamma.ln();
    needed.ceil().max(1.0) as usize + 10
}

/// Greedy action table of a Q-function (lowest index wins ties).
pub fn greedy_policy_table(q: &TabularQFunction) -> Vec<ActionId> {
    (0..q.num_states)
        .map(|s| {
            let mut best = 0;
            for a in 1..q.num_actions {
                if q.get(s, a) > q.get(s, best) {
                    best = a;
                }
            }
            ActionId(best)
        })
        .collect()
}

fn policy_transition(mdp: &TabularMdp, policy: &[ActionId]) -> DMatrix<f64> {
    let n = mdp.num_states;
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        let row = mdp.transition_row(s, policy[s].0);
        for sp in 0..n {
            p[(s, sp)] = row[sp];
        }
    }
    p
}

fn check_policy(mdp: &TabularMdp, policy: &[ActionId]) -> Result<()> {
    if policy.len() != mdp.num_states {
        return Err(Error::Dimension(format!(
            "policy covers {} states, mdp has {}",
            policy.len(),
            mdp.num_states
        )));
    }
    if let Some(a) = policy.iter().find(|a| a.0 >= mdp.num_actions) {
        return Err(Error::InvalidArgument(format!("policy action {a} out of range")));
    }
    Ok(())
}

/// Exact discounted state occupancy d^pi = (1-gamma) mu^T (I - gamma P_pi)^-1.
///
/// Uses a dense solve up to [`DENSE_OCCUPANCY_LIMIT`] states; larger models
/// accumulate the truncated series with tail mass gamma^T below 1e-12.
pub fn exact_occupancy(mdp: &TabularMdp, policy: &[ActionId]) -> Result<Vec<f64>> {
    check_policy(mdp, policy)?;
    if mdp.num_states <= DENSE_OCCUPANCY_LIMIT {
        occupancy_dense(mdp, policy)
    } else {
        Ok(occupancy_series(mdp, policy, 1e-12))
    }
}

fn occupancy_dense(mdp: &TabularMdp, policy: &[ActionId]) -> Result<Vec<f64>> {
    let n = mdp.num_states;
    let p = policy_transition(mdp, policy);
    let system = DMatrix::identity(n, n) - p.transpose() * mdp.gamma;
    let mu = DVector::from_column_slice(&mdp.initial_dist);
    let x = system
        .lu()
        .solve(&(mu * (1.0 - mdp.gamma)))
        .ok_or_else(|| Error::Internal("singular occupancy system with gamma < 1".into()))?;
    Ok(x.iter().map(|v| v.max(0.0)).collect())
}

/// (1-gamma) sum_{t<=T} gamma^t P(s_t = .) with T chosen so the dropped tail
/// has mass below `tail_tol`.
fn occupancy_series(mdp: &TabularMdp, policy: &[ActionId], tail_tol: f64) -> Vec<f64> {
    let n = mdp.num_states;
    let p = policy_transition(mdp, policy);
    let mut dist = DVector::from_column_slice(&mdp.initial_dist);
    let mut acc = DVector::zeros(n);
    let mut weight = 1.0 - mdp.gamma;
    loop {
        acc += &dist * weight;
        weight *= mdp.gamma;
        if weight <= tail_tol * (1.0 - mdp.gamma) || weight == 0.0 {
            break;
        }
        dist = p.transpose() * dist;
    }
    acc.iter().map(|v| v.max(0.0)).collect()
}

/// Exact policy value V^pi = mu^T (I - gamma P_pi)^-1 r_pi.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &[ActionId]) -> Result<f64> {
    check_policy(mdp, policy)?;
    let n = mdp.num_states;
    let p = policy_transition(mdp, policy);
    let system = DMatrix::identity(n, n) - p * mdp.gamma;
    let r_pi = DVector::from_iterator(n, (0..n).map(|s| mdp.reward(s, policy[s].0)));
    let v = system
        .lu()
        .solve(&r_pi)
        .ok_or_else(|| Error::Internal("singular value system with gamma < 1".into()))?;
    Ok(mdp.initial_dist.iter().zip(v.iter()).map(|(m, v)| m * v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn two_state_fixture() -> TabularMdp {
        TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.5, 0.5],
            0.5,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn backup_of_zero_function_is_reward() {
        let mdp = two_state_fixture();
        let t = bellman_backup(&mdp, &TabularQFunction::zeros(2, 2)).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(t.get(s, a), mdp.reward(s, a));
            }
        }
    }

    #[test]
    fn backup_with_zero_discount_is_reward() {
        let mut mdp = two_state_fixture();
        mdp.gamma = 0.0;
        let mut f = TabularQFunction::zeros(2, 2);
        f.set(0, 0, 42.0);
        f.set(1, 1, -3.0);
        let t = bellman_backup(&mdp, &f).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(t.get(s, a), mdp.reward(s, a));
            }
        }
    }

    #[test]
    fn backup_of_constant_two_adds_one() {
        // gamma = 0.5, f = 2 everywhere: continuation is 0.5 * 2 = 1
        let mdp = two_state_fixture();
        let f = TabularQFunction::from_values(2, 2, vec![2.0; 4]).unwrap();
        let t = bellman_backup(&mdp, &f).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert!((t.get(s, a) - (mdp.reward(s, a) + 1.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn backup_dimension_mismatch_errors() {
        let mdp = two_state_fixture();
        let f = TabularQFunction::zeros(3, 2);
        assert!(matches!(bellman_backup(&mdp, &f), Err(Error::Dimension(_))));
    }

    #[test]
    fn value_iteration_geometric_series() {
        let mdp =
            TabularMdp::new(1, 1, vec![1.0], vec![1.0], vec![1.0], 0.9, 1.0).unwrap();
        let q = value_iteration(&mdp, 1e-10, 1000).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() < 1e-8);
    }

    #[test]
    fn value_iteration_zero_discount_is_rewards() {
        let mut mdp = two_state_fixture();
        mdp.gamma = 0.0;
        let q = value_iteration(&mdp, 1e-12, 5).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(q.get(s, a), mdp.reward(s, a));
            }
        }
    }

    #[test]
    fn value_iteration_two_state_regression() {
        // Fixed point computed by long-run iteration at tol 1e-12: staying on
        // the matching action earns 1/(1-gamma) = 2.
        let q = value_iteration(&two_state_fixture(), 1e-12, 10_000).unwrap();
        let expected = [[2.0, 1.0], [1.0, 2.0]];
        for s in 0..2 {
            for a in 0..2 {
                assert!((q.get(s, a) - expected[s][a]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn value_iteration_reports_non_convergence() {
        let mdp = two_state_fixture();
        match value_iteration(&mdp, 1e-14, 2) {
            Err(Error::Convergence { iterations, residual }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn occupancy_absorbing_state_is_point_mass() {
        let mdp =
            TabularMdp::new(1, 1, vec![0.5], vec![1.0], vec![1.0], 0.9, 1.0).unwrap();
        let d = exact_occupancy(&mdp, &[ActionId(0)]).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupancy_identity_chain_stays_at_initial() {
        // P_pi = identity under action 0
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.5, 0.5],
            0.9,
            1.0,
        )
        .unwrap();
        let d = exact_occupancy(&mdp, &[ActionId(0), ActionId(0)]).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-12);
        assert!((d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn occupancy_matches_truncated_series() {
        let mut mdp = two_state_fixture();
        mdp.gamma = 0.9;
        let policy = [ActionId(0), ActionId(0)];
        let dense = exact_occupancy(&mdp, &policy).unwrap();
        // brute-force truncated sum over 200 steps
        let mut dist = mdp.initial_dist.clone();
        let mut acc = vec![0.0; 2];
        let mut w = 1.0 - mdp.gamma;
        for _ in 0..=200 {
            for s in 0..2 {
                acc[s] += w * dist[s];
            }
            w *= mdp.gamma;
            let mut next = vec![0.0; 2];
            for s in 0..2 {
                let row = mdp.transition_row(s, policy[s].0);
                for sp in 0..2 {
                    next[sp] += dist[s] * row[sp];
                }
            }
            dist = next;
        }
        for s in 0..2 {
            assert!((dense[s] - acc[s]).abs() < 1e-8, "state {s}: {} vs {}", dense[s], acc[s]);
        }
        let total: f64 = dense.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(dense.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn occupancy_series_path_matches_dense() {
        let mut mdp = two_state_fixture();
        mdp.gamma = 0.9;
        let policy = [ActionId(0), ActionId(1)];
        let dense = occupancy_dense(&mdp, &policy).unwrap();
        let series = occupancy_series(&mdp, &policy, 1e-14);
        for s in 0..2 {
            assert!((dense[s] - series[s]).abs() < 1e-10);
        }
    }

    #[test]
    fn policy_value_zero_rewards() {
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.0, 0.0],
            vec![0.5, 0.5, 0.5, 0.5],
            vec![1.0, 0.0],
            0.9,
            1.0,
        )
        .unwrap();
        assert_eq!(exact_policy_value(&mdp, &[ActionId(0), ActionId(0)]).unwrap(), 0.0);
    }

    #[test]
    fn policy_value_single_state() {
        let mdp =
            TabularMdp::new(1, 1, vec![1.0], vec![1.0], vec![1.0], 0.9, 1.0).unwrap();
        assert!((exact_policy_value(&mdp, &[ActionId(0)]).unwrap() - 10.0).abs() < 1e-10);
    }

    #[test]
    fn policy_value_cross_checked_against_truncated_rollouts() {
        let mut mdp = two_state_fixture();
        mdp.gamma = 0.9;
        let horizon = 200;
        for pol in [[ActionId(0), ActionId(0)], [ActionId(1), ActionId(1)]] {
            let exact = exact_policy_value(&mdp, &pol).unwrap();
            // deterministic MDP: enumerate both initial states
            let mut truncated = 0.0;
            for (s0, w0) in [(0usize, 0.5), (1usize, 0.5)] {
                let mut s = s0;
                let mut g = 1.0;
                let mut total = 0.0;
                for _ in 0..horizon {
                    let a = pol[s];
                    total += g * mdp.reward(s, a.0);
                    let row = mdp.transition_row(s, a.0);
                    s = row.iter().position(|p| *p > 0.5).unwrap();
                    g *= mdp.gamma;
                }
                truncated += w0 * total;
            }
            let tol = mdp.gamma.powi(horizon) * mdp.reward_bound / (1.0 - mdp.gamma) + 1e-8;
            assert!((exact - truncated).abs() <= tol);
        }
    }

    #[test]
    fn performance_difference_identity_small() {
        // (1-gamma)(V* - V^pi) = E_{d^pi}[Q*(s,pi*(s)) - Q*(s,pi(s))]
        let mut rng = rng_from_seed(11);
        for _ in 0..10 {
            let mdp = crate::benchmark::random_tabular(
                rand::Rng::random::<u64>(&mut rng),
                3,
                2,
                1.0,
                1.0,
            )
            .unwrap();
            let q = value_iteration(&mdp, 1e-13, 100_000).unwrap();
            let pi_star = greedy_policy_table(&q);
            let pi: Vec<ActionId> =
                (0..3).map(|_| ActionId(rand::Rng::random_range(&mut rng, 0..2))).collect();
            let v_star = exact_policy_value(&mdp, &pi_star).unwrap();
            let v_pi = exact_policy_value(&mdp, &pi).unwrap();
            let d = exact_occupancy(&mdp, &pi).unwrap();
            let rhs: f64 = (0..3)
                .map(|s| d[s] * (q.get(s, pi_star[s].0) - q.get(s, pi[s].0)))
                .sum();
            assert!(((1.0 - mdp.gamma) * (v_star - v_pi) - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn backup_is_gamma_contraction() {
        let mut rng = rng_from_seed(5);
        for trial in 0..20 {
            let mdp = crate::benchmark::random_tabular(trial, 4, 3, 1.0, 0.7).unwrap();
            let rand_table = |rng: &mut crate::rng::ChaCha8Rng| {
                let vals: Vec<f64> =
                    (0..12).map(|_| rand::Rng::random_range(&mut *rng, -5.0..5.0)).collect();
                TabularQFunction::from_values(4, 3, vals).unwrap()
            };
            let f = rand_table(&mut rng);
            let g = rand_table(&mut rng);
            let tf = bellman_backup(&mdp, &f).unwrap();
            let tg = bellman_backup(&mdp, &g).unwrap();
            assert!(tf.sup_distance(&tg) <= mdp.gamma * f.sup_distance(&g) + 1e-12);
        }
    }

    #[test]
    fn json_round_trip_is_bit_stable() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![0.1 + 0.2, -1.0 / 3.0, 1e-300, 0.7654321],
            vec![
                0.3, 0.7, 0.123456789, 1.0 - 0.123456789, 1.0 / 3.0, 1.0 - 1.0 / 3.0, 0.5, 0.5,
            ],
            vec![0.25, 0.75],
            0.9,
            1.0,
        )
        .unwrap();
        let json = mdp.to_json();
        let back = TabularMdp::from_json(&json).unwrap();
        assert_eq!(
            mdp.rewards.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            back.rewards.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(
            mdp.transitions.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            back.transitions.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(back.to_json(), json);
    }

    #[test]
    fn invalid_rows_rejected() {
        let bad = TabularMdp::new(
            1,
            1,
            vec![0.0],
            vec![0.9999],
            vec![1.0],
            0.9,
            1.0,
        );
        assert!(bad.is_err());
    }
}

//! Policy value and regret estimation: truncated Monte-Carlo rollouts for
//! continuous MDPs, exact linear-algebra evaluation for tabular MDPs, and
//! construction of the reference optimal policy.

use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{draw_dataset, BehaviorSampler};
use crate::error::Result;
use crate::fqi::{fqi_fit, FqiConfig, GreedyPolicy, Regression};
use crate::linalg::{mean_and_std_error, pairwise_sum};
use crate::mdp::{
    exact_policy_value, value_iteration_default, MdpModel, Policy, QFunction, StateVec,
};
use crate::rng::{derive_seed, substream, REFERENCE_SALT};

#[derive(Clone, Copy, Debug)]
pub struct EvalConfig {
    pub num_initial_states: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(num_initial_states: usize, horizon: usize, seed: u64) -> Self {
        assert!(horizon >= 1, "horizon must be at least 1");
        EvalConfig { num_initial_states, horizon, seed }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { num_initial_states: 40_000, horizon: 50, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RegretEstimate {
    pub v_star_hat: f64,
    pub v_pi_hat: f64,
    pub regret: f64,
    pub std_error: f64,
    /// gamma^horizon * M / (1 - gamma); zero on the exact tabular path.
    pub truncation_bias_bound: f64,
}

/// Discounted return of one truncated rollout; rollout j uses sub-stream j
/// of the evaluation seed so parallel execution cannot change results.
fn rollout_return(mdp: &MdpModel, policy: &dyn Policy, horizon: usize, seed: u64, j: u64) -> f64 {
    let mut rng = substream(seed, j);
    let gamma = mdp.discount();
    let mut state = mdp.sample_initial(&mut rng);
    let mut total = 0.0;
    let mut weight = 1.0;
    for _ in 0..horizon {
        let action = policy.act(&state, &mut rng);
        let (reward, next) = mdp.sample_step(&state, action, &mut rng);
        total += weight * reward;
        weight *= gamma;
        state = next;
    }
    total
}

fn rollout_returns(mdp: &MdpModel, policy: &dyn Policy, config: &EvalConfig) -> Vec<f64> {
    (0..config.num_initial_states as u64)
        .into_par_iter()
        .map(|j| rollout_return(mdp, policy, config.horizon, config.seed, j))
        .collect()
}

/// Monte-Carlo policy value: mean over rollouts of sum_{t<H} gamma^t r_t,
/// with its standard error. Deterministic given the seed.
pub fn mc_policy_value(mdp: &MdpModel, policy: &dyn Policy, config: &EvalConfig) -> (f64, f64) {
    let returns = rollout_returns(mdp, policy, config);
    mean_and_std_error(&returns)
}

/// Truncation bias bound gamma^H M / (1 - gamma) for reporting alongside
/// Monte-Carlo estimates.
pub fn truncation_bias_bound(mdp: &MdpModel, horizon: usize) -> f64 {
    mdp.discount().powi(horizon as i32) * mdp.reward_bound() / (1.0 - mdp.discount())
}

#[derive(Clone, Debug)]
pub struct ReferenceConfig {
    pub n: usize,
    pub iterations: usize,
    pub ball_radius: f64,
    pub regression: Regression,
    pub seed: u64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            n: 40_000,
            iterations: 100,
            ball_radius: 1e6,
            regression: Regression::MinimumNorm,
            seed: 0,
        }
    }
}

/// The reference optimal policy used for regret computation: exact value
/// iteration for tabular MDPs, otherwise a long fitted Q-iteration run on a
/// fresh independent dataset.
pub fn reference_optimal(
    mdp: &MdpModel,
    behavior: &dyn BehaviorSampler,
    config: &ReferenceConfig,
) -> Result<GreedyPolicy> {
    match mdp {
        MdpModel::Tabular(t) => {
            let q = value_iteration_default(t)?;
            Ok(GreedyPolicy::new(Arc::new(q)))
        }
        MdpModel::Linear(l) => {
            let data_seed = derive_seed(config.seed, REFERENCE_SALT, 0);
            let dataset = draw_dataset(mdp, behavior, config.n, data_seed)?;
            let fqi_config = FqiConfig::new(config.iterations, config.ball_radius, l.gamma)
                .with_regression(config.regression);
            let q = fqi_fit(&dataset, l.features(), &fqi_config)?;
            Ok(GreedyPolicy::new(Arc::new(q)))
        }
    }
}

/// Regret of `policy` against `reference`. Tabular MDPs are evaluated
/// exactly; continuous MDPs use common-random-number rollouts (rollout j of
/// both policies shares sub-stream j, so regret of the reference against
/// itself is exactly zero).
pub fn estimate_regret(
    mdp: &MdpModel,
    policy: &GreedyPolicy,
    reference: &GreedyPolicy,
    config: &EvalConfig,
) -> Result<RegretEstimate> {
    if let Some(t) = mdp.as_tabular() {
        let v_star = exact_policy_value(t, &reference.table(t.num_states))?;
        let v_pi = exact_policy_value(t, &policy.table(t.num_states))?;
        return Ok(RegretEstimate {
            v_star_hat: v_star,
            v_pi_hat: v_pi,
            regret: v_star - v_pi,
            std_error: 0.0,
            truncation_bias_bound: 0.0,
        });
    }
    let star = rollout_returns(mdp, reference, config);
    let pi = rollout_returns(mdp, policy, config);
    let diffs: Vec<f64> = star.iter().zip(&pi).map(|(a, b)| a - b).collect();
    let (regret, std_error) = mean_and_std_error(&diffs);
    let m = config.num_initial_states as f64;
    Ok(RegretEstimate {
        v_star_hat: pairwise_sum(&star) / m,
        v_pi_hat: pairwise_sum(&pi) / m,
        regret,
        std_error,
        truncation_bias_bound: truncation_bias_bound(mdp, config.horizon),
    })
}

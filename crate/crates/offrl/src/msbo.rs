//! Minimax Bellman-residual estimation for linear classes: the inner witness
//! maximization has a closed form (a concave quadratic), and the outer
//! minimization runs projected subgradient descent with seeded restarts.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{Dataset, FeatureData};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::{project_ball, SymmetricPsd};
use crate::rng::{substream, ChaCha8Rng};

#[derive(Clone, Debug)]
pub struct MsboConfig {
    /// Witness penalty zeta > 0 (0.5 in the original proposal).
    pub zeta: f64,
    /// Euclidean bound on the q-class coefficients. The sup-norm class
    /// constraint is enforced through ||w|| <= bound, which is sufficient
    /// since ||phi|| <= 1 but conservative.
    pub weight_bound: f64,
    /// Euclidean bound on the witness-class coefficients.
    pub witness_bound: f64,
    pub outer_steps: usize,
    /// Step schedule eta_t = eta0 / sqrt(t + 1); `None` uses
    /// 1 / (n * max(1, weight_bound)).
    pub initial_step: Option<f64>,
    pub restarts: usize,
    /// Early-stop threshold on the iterate change per step.
    pub tolerance: f64,
    pub gamma: f64,
    /// Discount the max term of the residual (gamma * max_a' q(s', a')).
    /// The undiscounted literal form is kept behind this flag.
    pub discounted_residual: bool,
    /// Seed for restart initialization.
    pub seed: u64,
    /// Optional explicit start for the first restart.
    pub initial_weights: Option<Vec<f64>>,
}

impl MsboConfig {
    pub fn new(zeta: f64, weight_bound: f64, witness_bound: f64, gamma: f64) -> Self {
        MsboConfig {
            zeta,
            weight_bound,
            witness_bound,
            outer_steps: 400,
            initial_step: None,
            restarts: 5,
            tolerance: 1e-9,
            gamma,
            discounted_residual: true,
            seed: 0,
            initial_weights: None,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.zeta <= 0.0 {
            return Err(Error::InvalidArgument("zeta must be positive".into()));
        }
        if self.weight_bound <= 0.0 || self.witness_bound <= 0.0 {
            return Err(Error::InvalidArgument("coefficient bounds must be positive".into()));
        }
        if self.outer_steps == 0 || self.restarts == 0 {
            return Err(Error::InvalidArgument("outer_steps and restarts must be positive".into()));
        }
        if let Some(w) = &self.initial_weights {
            if w.len() != d {
                return Err(Error::Dimension(format!(
                    "initial weights have {} entries, features have {d}",
                    w.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MsboSolution {
    pub q_weights: DVector<f64>,
    /// Minimum inner-max value over all iterates and restarts.
    pub final_objective: f64,
    /// Witness at the reported optimum (feasible, possibly rescaled).
    pub witness_weights: DVector<f64>,
    /// Total outer steps executed across restarts.
    pub iterations_used: usize,
    /// False when every restart exhausted its step budget.
    pub converged: bool,
}

struct Precomputed {
    fd: FeatureData,
    pinv: DMatrix<f64>,
}

impl Precomputed {
    fn new(dataset: &Dataset, features: Arc<dyn FeatureMap>) -> Result<Self> {
        let fd = FeatureData::new(dataset, features)?;
        let pinv = SymmetricPsd::new(&fd.sigma_hat).pseudo_inverse(1e-12);
        Ok(Precomputed { fd, pinv })
    }
}

struct InnerEval {
    witness: DVector<f64>,
    value: f64,
    /// Active argmax branch at each next state (lowest index on ties).
    branches: Vec<usize>,
    /// Residuals delta_i(q).
    residuals: DVector<f64>,
}

fn inner_eval(pre: &Precomputed, q_weights: &DVector<f64>, config: &MsboConfig) -> InnerEval {
    let fd = &pre.fd;
    let n = fd.n();
    let discount = if config.discounted_residual { config.gamma } else { 1.0 };

    let action_values: Vec<DVector<f64>> =
        fd.next_phi.iter().map(|m| m * q_weights).collect();
    let mut branches = vec![0usize; n];
    let mut best = action_values[0].clone();
    for (a, vals) in action_values.iter().enumerate().skip(1) {
        for i in 0..n {
            if vals[i] > best[i] {
                best[i] = vals[i];
                branches[i] = a;
            }
        }
    }
    let q_at_data = &fd.phi * q_weights;
    let residuals = &fd.rewards - q_at_data + best * discount;

    let b = fd.phi.transpose() * &residuals;
    let mut witness = &pre.pinv * &b / (2.0 * config.zeta);
    let norm = witness.norm();
    if norm > config.witness_bound {
        witness *= config.witness_bound / norm;
    }
    let t = &fd.phi * &witness;
    let value = b.dot(&witness) - config.zeta * t.dot(&t);
    InnerEval { witness, value, branches, residuals }
}

/// Subgradient of the inner-max value in the q-weights at the active
/// branches: sum_i (phi_i . u) (-phi_i + discount * phi(s'_i, a*_i)).
fn outer_subgradient(pre: &Precomputed, eval: &InnerEval, config: &MsboConfig) -> DVector<f64> {
    let fd = &pre.fd;
    let discount = if config.discounted_residual { config.gamma } else { 1.0 };
    let t = &fd.phi * &eval.witness;
    let mut grad = -(fd.phi.transpose() * &t);
    let d = fd.dim();
    let mut row = DVector::zeros(d);
    for i in 0..fd.n() {
        let a = eval.branches[i];
        for j in 0..d {
            row[j] = fd.next_phi[a][(i, j)];
        }
        grad += &row * (discount * t[i]);
    }
    grad
}

/// The closed-form inner maximization at fixed q-weights: the unconstrained
/// maximizer (2 zeta)^-1 Sigma-hat^+ b over the design's column space,
/// rescaled to the witness bound when infeasible. Returns (witness, value).
pub fn inner_max(
    dataset: &Dataset,
    features: Arc<dyn FeatureMap>,
    q_weights: &[f64],
    config: &MsboConfig,
) -> Result<(DVector<f64>, f64)> {
    let pre = Precomputed::new(dataset, features)?;
    config.validate(pre.fd.dim())?;
    if q_weights.len() != pre.fd.dim() {
        return Err(Error::Dimension(format!(
            "q weights have {} entries, features have {}",
            q_weights.len(),
            pre.fd.dim()
        )));
    }
    let eval = inner_eval(&pre, &DVector::from_row_slice(q_weights), config);
    Ok((eval.witness, eval.value))
}

struct RestartOutcome {
    best_value: f64,
    best_weights: DVector<f64>,
    best_witness: DVector<f64>,
    steps: usize,
    converged: bool,
}

fn run_restart(pre: &Precomputed, config: &MsboConfig, start: DVector<f64>) -> RestartOutcome {
    let eta0 = config.initial_step.unwrap_or_else(|| {
        1.0 / (pre.fd.n() as f64 * config.weight_bound.max(1.0))
    });
    let mut v = project_ball(&start, config.weight_bound);
    let mut eval = inner_eval(pre, &v, config);
    let mut best_value = eval.value;
    let mut best_weights = v.clone();
    let mut best_witness = eval.witness.clone();
    let mut steps = 0;
    let mut converged = false;
    for t in 0..config.outer_steps {
        if eval.value == 0.0 {
            converged = true;
            break;
        }
        let grad = outer_subgradient(pre, &eval, config);
        let eta = eta0 / ((t + 1) as f64).sqrt();
        let next = project_ball(&(&v - grad * eta), config.weight_bound);
        let moved = (&next - &v).norm();
        v = next;
        eval = inner_eval(pre, &v, config);
        steps = t + 1;
        if eval.value < best_value {
            best_value = eval.value;
            best_weights = v.clone();
            best_witness = eval.witness.clone();
        }
        if moved < config.tolerance {
            converged = true;
            break;
        }
    }
    RestartOutcome { best_value, best_weights, best_witness, steps: steps.max(1), converged }
}

fn random_ball_point(d: usize, radius: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut v = DVector::from_iterator(d, (0..d).map(|_| {
        let x: f64 = StandardNormal.sample(rng);
        x
    }));
    let norm = v.norm();
    if norm > 0.0 {
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        v *= r / norm;
    }
    v
}

/// Fits the minimax estimator: restarts of projected subgradient descent on
/// the inner-max value, reporting the best iterate seen anywhere. Restarts
/// run concurrently; the reduction is deterministic (objective, then lowest
/// restart index). A run that exhausts every step budget still returns its
/// best iterate, flagged as not converged.
pub fn msbo_fit(
    dataset: &Dataset,
    features: Arc<dyn FeatureMap>,
    config: &MsboConfig,
) -> Result<MsboSolution> {
    let pre = Precomputed::new(dataset, Arc::clone(&features))?;
    config.validate(pre.fd.dim())?;
    let d = pre.fd.dim();
    let starts: Vec<DVector<f64>> = (0..config.restarts)
        .map(|r| {
            if r == 0 {
                if let Some(w) = &config.initial_weights {
                    return DVector::from_row_slice(w);
                }
            }
            let mut rng = substream(config.seed, crate::rng::MSBO_SALT ^ r as u64);
            random_ball_point(d, config.weight_bound, &mut rng)
        })
        .collect();
    let outcomes: Vec<RestartOutcome> =
        starts.into_par_iter().map(|s| run_restart(&pre, config, s)).collect();
    let best_idx = outcomes
        .iter()
        .enumerate()
        .min_by(|a, b| {
            a.1.best_value
                .partial_cmp(&b.1.best_value)
                .expect("finite objectives")
                .then(a.0.cmp(&b.0))
        })
        .map(|(i, _)| i)
        .expect("at least one restart");
    let iterations_used = outcomes.iter().map(|o| o.steps).sum();
    let converged = outcomes[best_idx].converged;
    let best = &outcomes[best_idx];
    Ok(MsboSolution {
        q_weights: best.best_weights.clone(),
        final_objective: best.best_value,
        witness_weights: best.best_witness.clone(),
        iterations_used,
        converged,
    })
}

/// Weight-export JSON `{d, B, K, weights, zeta, final_objective, restarts}`.
pub fn msbo_to_json(solution: &MsboSolution, config: &MsboConfig) -> String {
    #[derive(serde::Serialize)]
    struct Doc<'a> {
        d: usize,
        #[serde(rename = "B")]
        b: f64,
        #[serde(rename = "K")]
        k: usize,
        weights: &'a [f64],
        zeta: f64,
        final_objective: f64,
        restarts: usize,
    }
    serde_json::to_string(&Doc {
        d: solution.q_weights.len(),
        b: config.weight_bound,
        k: solution.iterations_used,
        weights: solution.q_weights.as_slice(),
        zeta: config.zeta,
        final_objective: solution.final_objective,
        restarts: config.restarts,
    })
    .expect("solution serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{draw_dataset, TabularUniformBehavior, TransitionSample};
    use crate::features::OneHotFeatures;
    use crate::mdp::{value_iteration, ActionId, MdpModel, StateVec, TabularMdp};

    fn one_sample_dataset(reward: f64) -> Dataset {
        Dataset {
            samples: vec![TransitionSample {
                state: StateVec::from_index(0),
                action: ActionId(0),
                reward,
                next_state: StateVec::from_index(0),
            }],
            seed: 0,
            behavior_id: "manual".into(),
        }
    }

    #[test]
    fn bellman_consistent_q_gives_zero_witness() {
        // gamma = 0 and q equal to the rewards on every visited cell
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 2, num_actions: 2 });
        let ds = Dataset {
            samples: vec![
                TransitionSample {
                    state: StateVec::from_index(0),
                    action: ActionId(0),
                    reward: 0.7,
                    next_state: StateVec::from_index(1),
                },
                TransitionSample {
                    state: StateVec::from_index(1),
                    action: ActionId(1),
                    reward: -0.2,
                    next_state: StateVec::from_index(0),
                },
            ],
            seed: 0,
            behavior_id: "manual".into(),
        };
        let config = MsboConfig::new(0.5, 10.0, 10.0, 0.0);
        let q = [0.7, 0.0, 0.0, -0.2];
        let (witness, value) = inner_max(&ds, fm, &q, &config).unwrap();
        assert!(witness.norm() < 1e-12);
        assert!(value.abs() < 1e-24);
    }

    #[test]
    fn one_sample_closed_form() {
        // phi = e0, residual 1, zeta = 0.5: witness e0 with value 1 - 0.5
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 1, num_actions: 2 });
        let ds = one_sample_dataset(1.0);
        let config = MsboConfig::new(0.5, 10.0, 10.0, 0.0);
        let (witness, value) = inner_max(&ds, Arc::clone(&fm), &[0.0, 0.0], &config).unwrap();
        assert!((witness[0] - 1.0).abs() < 1e-12);
        assert!(witness[1].abs() < 1e-12);
        assert!((value - 0.5).abs() < 1e-12);

        // doubling zeta halves the unconstrained maximizer
        let config2 = MsboConfig::new(1.0, 10.0, 10.0, 0.0);
        let (witness2, _) = inner_max(&ds, fm, &[0.0, 0.0], &config2).unwrap();
        assert!((witness2[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn witness_bound_rescales_feasibly() {
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 1, num_actions: 2 });
        let ds = one_sample_dataset(1.0);
        let free = MsboConfig::new(0.5, 10.0, 10.0, 0.0);
        let tight = MsboConfig::new(0.5, 10.0, 0.25, 0.0);
        let (wf, vf) = inner_max(&ds, Arc::clone(&fm), &[0.0, 0.0], &free).unwrap();
        let (wt, vt) = inner_max(&ds, fm, &[0.0, 0.0], &tight).unwrap();
        assert!(wf.norm() > 0.25);
        assert!((wt.norm() - 0.25).abs() < 1e-12);
        assert!(vt <= vf);
        assert!(vt >= 0.0, "rescaled witness kept a feasible nonnegative value");
    }

    #[test]
    fn objective_is_nonnegative_at_random_weights() {
        let mdp_t = crate::benchmark::random_tabular(2, 3, 2, 1.0, 1.0).unwrap();
        let model = MdpModel::Tabular(mdp_t);
        let behavior = TabularUniformBehavior { num_states: 3, num_actions: 2 };
        let ds = draw_dataset(&model, &behavior, 200, 4).unwrap();
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 3, num_actions: 2 });
        let config = MsboConfig::new(0.5, 50.0, 50.0, 0.9);
        let mut rng = crate::rng::rng_from_seed(9);
        for _ in 0..20 {
            use rand::Rng;
            let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 20.0 - 10.0).collect();
            let (_, value) = inner_max(&ds, Arc::clone(&fm), &w, &config).unwrap();
            assert!(value >= -1e-12, "inner max value {value} below the zero-witness floor");
        }
    }

    #[test]
    fn initialized_at_fixed_point_returns_immediately() {
        // deterministic fixture whose Q* table is exactly representable
        let mdp_t = TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.5, 0.5],
            0.5,
            1.0,
        )
        .unwrap();
        let model = MdpModel::Tabular(mdp_t);
        let behavior = TabularUniformBehavior { num_states: 2, num_actions: 2 };
        let ds = draw_dataset(&model, &behavior, 100, 5).unwrap();
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 2, num_actions: 2 });
        let mut config = MsboConfig::new(0.5, 10.0, 10.0, 0.5);
        config.restarts = 1;
        config.initial_weights = Some(vec![2.0, 1.0, 1.0, 2.0]);
        let solution = msbo_fit(&ds, fm, &config).unwrap();
        assert_eq!(solution.final_objective, 0.0);
        assert!(solution.converged);
        assert_eq!(solution.iterations_used, 1);
        assert_eq!(solution.q_weights.as_slice(), &[2.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn recovers_q_star_on_covered_tabular_data() {
        let mdp_t = crate::benchmark::random_tabular_with_gamma(7, 2, 2, 1.0, 1.0, 0.5).unwrap();
        let q_star = value_iteration(&mdp_t, 1e-12, 100_000).unwrap();
        let m = mdp_t.reward_bound;
        let gamma = mdp_t.gamma;
        let model = MdpModel::Tabular(mdp_t);
        let behavior = TabularUniformBehavior { num_states: 2, num_actions: 2 };
        let n = 10_000;
        let ds = draw_dataset(&model, &behavior, n, 6).unwrap();
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 2, num_actions: 2 });
        let bound = crate::bounds::tabular_completeness_b(2, 2, m, gamma);
        let mut config = MsboConfig::new(0.5, bound, bound, gamma);
        config.outer_steps = 600;
        let solution = msbo_fit(&ds, Arc::clone(&fm), &config).unwrap();
        let sup_err = (0..2)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| (solution.q_weights[s * 2 + a] - q_star.get(s, a)).abs())
            .fold(0.0f64, f64::max);
        // rate-based tolerance (loose at this scale) plus a calibrated one
        let m_prime = m / (1.0 - gamma);
        let a_n = crate::bounds::msbo_an(n, 4, m_prime, 0.5, 0.25, 1.0);
        assert!(sup_err <= 10.0 * a_n, "{sup_err} vs 10 a_n = {}", 10.0 * a_n);
        assert!(sup_err <= 0.5, "sup error {sup_err} too large for n = {n}");
    }

    #[test]
    fn negating_rewards_behaves_symmetrically() {
        // |A| = 1: the fitted function for the negated instance is the
        // negation, and errors match exactly
        let mdp_t = crate::benchmark::random_tabular_with_gamma(3, 3, 1, 1.0, 1.0, 0.5).unwrap();
        let mut neg = mdp_t.clone();
        let neg_rewards: Vec<f64> =
            (0..3).map(|s| -mdp_t.reward(s, 0)).collect();
        neg = TabularMdp::new(
            3,
            1,
            neg_rewards,
            (0..3).flat_map(|s| mdp_t.transition_row(s, 0).to_vec()).collect(),
            neg.initial_dist.clone(),
            0.5,
            1.0,
        )
        .unwrap();
        let fm: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures { num_states: 3, num_actions: 1 });
        let behavior = TabularUniformBehavior { num_states: 3, num_actions: 1 };
        let bound = crate::bounds::tabular_completeness_b(3, 1, 1.0, 0.5);
        let mut config = MsboConfig::new(0.5, bound, bound, 0.5);
        config.outer_steps = 500;

        let mut errs = Vec::new();
        let mut errs_neg = Vec::new();
        for seed in 0..6u64 {
            for (mdp, errors) in [(&mdp_t, &mut errs), (&neg, &mut errs_neg)] {
                let q_star = value_iteration(mdp, 1e-12, 100_000).unwrap();
                let model = MdpModel::Tabular(mdp.clone());
                let ds = draw_dataset(&model, &behavior, 2000, seed + 50).unwrap();
                let sol = msbo_fit(&ds, Arc::clone(&fm), &config).unwrap();
                let err = (0..3)
                    .map(|s| (sol.q_weights[s] - q_star.get(s, 0)).abs())
                    .fold(0.0f64, f64::max);
                errors.push(err);
            }
        }
        let med = crate::stats::median(&errs).max(1e-12);
        let med_neg = crate::stats::median(&errs_neg).max(1e-12);
        let ratio = med / med_neg;
        assert!((0.5..=2.0).contains(&ratio), "median error ratio {ratio}");
    }
}

//! Margin analysis: the action gap Delta(s), exact occupancy sampling, the
//! empirical margin profile sup_pi P_{s ~ d^pi}(0 < Delta(s) <= delta) with
//! a fitted (alpha, delta0), and the closed-form delta0 constants for linear
//! and tabular Q*.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fqi::{GreedyPolicy, LinearQFunction};
use crate::mdp::{MdpModel, Policy, QFunction, StateVec, TabularQFunction};
use crate::rng::{substream, ChaCha8Rng};
use crate::stats::linear_fit;

/// Default absolute tolerance for deciding argmax membership; Q-values at
/// this scale are O(1)-O(10).
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-9;

/// The margin Delta(s): the gap between the best Q-value and the best
/// Q-value among actions outside the argmax set, or 0 when every action is
/// in the argmax set (within `tie_tolerance`).
pub fn margin_at(q: &dyn QFunction, s: &StateVec, tie_tolerance: f64) -> f64 {
    let best = q.max_value(s);
    let mut runner_up = f64::NEG_INFINITY;
    for a in 0..q.num_actions() {
        let v = q.value(s, crate::mdp::ActionId(a));
        if v < best - tie_tolerance && v > runner_up {
            runner_up = v;
        }
    }
    if runner_up == f64::NEG_INFINITY {
        0.0
    } else {
        best - runner_up
    }
}

/// Exact draw from d^pi: stop a rollout at T ~ Geometric(1 - gamma) with
/// support {0, 1, 2, ...} and return s_T.
pub fn occupancy_sample(mdp: &MdpModel, policy: &dyn Policy, rng: &mut ChaCha8Rng) -> StateVec {
    use rand::Rng;
    let gamma = mdp.discount();
    let steps = if gamma == 0.0 {
        0
    } else {
        let u: f64 = rng.random();
        // 1 - u is in (0, 1]; floor(ln(1-u) / ln(gamma)) is Geometric(1-gamma)
        ((1.0 - u).ln() / gamma.ln()).floor() as u64
    };
    let mut state = mdp.sample_initial(rng);
    for _ in 0..steps {
        let action = policy.act(&state, rng);
        let (_, next) = mdp.sample_step(&state, action, rng);
        state = next;
    }
    state
}

/// Fitted margin-condition parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum MarginFit {
    /// CDF behaves like (delta / delta0)^alpha near zero.
    PowerLaw { alpha: f64, delta0: f64, r_squared: f64 },
    /// No positive-margin mass was observed below `delta0`: the empirical
    /// profile is consistent with alpha = infinity.
    Infinite { delta0: f64 },
    /// No informative profile (all margins zero, or no fittable points).
    Degenerate,
}

#[derive(Clone, Debug)]
pub struct MarginProfile {
    pub delta_grid: Vec<f64>,
    /// Per grid point: max over probed policies of the empirical
    /// P(0 < Delta <= delta).
    pub cdf_values: Vec<f64>,
    pub fit: MarginFit,
}

impl MarginProfile {
    /// CSV rows `(delta, cdf_max_over_policies)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,cdf\n");
        for (d, c) in self.delta_grid.iter().zip(&self.cdf_values) {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }

    /// JSON `{alpha, delta0, r2}`; alpha is the string "inf" in the
    /// infinite-margin case and all fields are null when degenerate.
    pub fn to_json(&self) -> String {
        match &self.fit {
            MarginFit::PowerLaw { alpha, delta0, r_squared } => {
                format!("{{\"alpha\":{alpha},\"delta0\":{delta0},\"r2\":{r_squared}}}")
            }
            MarginFit::Infinite { delta0 } => {
                format!("{{\"alpha\":\"inf\",\"delta0\":{delta0},\"r2\":null}}")
            }
            MarginFit::Degenerate => "{\"alpha\":null,\"delta0\":null,\"r2\":null}".into(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProfileConfig {
    pub samples_per_policy: usize,
    pub tie_tolerance: f64,
    pub seed: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { samples_per_policy: 100_000, tie_tolerance: DEFAULT_TIE_TOLERANCE, seed: 0 }
    }
}

/// Logarithmically spaced grid, inclusive of both endpoints.
pub fn log_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    assert!(min > 0.0 && max > min && count >= 2);
    let (lo, hi) = (min.ln(), max.ln());
    (0..count)
        .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Estimates the margin profile: for each probe policy, the empirical CDF of
/// positive margins at occupancy samples; the profile keeps the pointwise
/// max over policies and fits (alpha, delta0) by log-log least squares on
/// grid points with CDF in (0, 0.5].
pub fn estimate_profile(
    mdp: &MdpModel,
    q_star: &dyn QFunction,
    policies: &[Arc<dyn Policy>],
    delta_grid: &[f64],
    config: &ProfileConfig,
) -> Result<MarginProfile> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("probe policy set is empty".into()));
    }
    if delta_grid.is_empty() || delta_grid.windows(2).any(|w| w[0] >= w[1]) || delta_grid[0] <= 0.0 {
        return Err(Error::InvalidArgument("delta grid must be positive and increasing".into()));
    }
    let m = config.samples_per_policy;
    let mut cdf_max = vec![0.0f64; delta_grid.len()];
    let mut min_positive_margin = f64::INFINITY;
    let mut any_positive = false;
    for (p_idx, policy) in policies.iter().enumerate() {
        let margins: Vec<f64> = (0..m as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = substream(config.seed, (p_idx as u64) << 32 | j);
                let s = occupancy_sample(mdp, policy.as_ref(), &mut rng);
                margin_at(q_star, &s, config.tie_tolerance)
            })
            .collect();
        for &g in margins.iter().filter(|g| **g > 0.0) {
            any_positive = true;
            if g < min_positive_margin {
                min_positive_margin = g;
            }
        }
        for (i, d) in delta_grid.iter().enumerate() {
            let count = margins.iter().filter(|g| **g > 0.0 && **g <= *d).count();
            let cdf = count as f64 / m as f64;
            if cdf > cdf_max[i] {
                cdf_max[i] = cdf;
            }
        }
    }
    let fit = fit_profile(delta_grid, &cdf_max, any_positive, min_positive_margin);
    Ok(MarginProfile { delta_grid: delta_grid.to_vec(), cdf_values: cdf_max, fit })
}

fn fit_profile(
    delta_grid: &[f64],
    cdf: &[f64],
    any_positive: bool,
    min_positive_margin: f64,
) -> MarginFit {
    if !any_positive {
        return MarginFit::Degenerate;
    }
    let pts: Vec<(f64, f64)> = delta_grid
        .iter()
        .zip(cdf)
        .filter(|(_, c)| **c > 0.0 && **c <= 0.5)
        .map(|(d, c)| (d.ln(), c.ln()))
        .collect();
    if pts.len() < 3 {
        // positive margins exist but the grid sees no usable mass near zero
        return MarginFit::Infinite { delta0: min_positive_margin };
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    match linear_fit(&xs, &ys) {
        Ok(fit) if fit.slope > 0.0 => MarginFit::PowerLaw {
            alpha: fit.slope,
            delta0: (-fit.intercept / fit.slope).exp(),
            r_squared: fit.r_squared,
        },
        _ => MarginFit::Degenerate,
    }
}

/// The largest delta0 for which the infinite-alpha margin condition holds on
/// a finite MDP: the minimum positive per-state margin. States whose actions
/// all tie (within `gap_tolerance`) are skipped; an error is returned when
/// every state ties.
pub fn tabular_delta0(q_star: &TabularQFunction, gap_tolerance: f64) -> Result<f64> {
    let mut min_gap = f64::INFINITY;
    for s in 0..q_star.num_states {
        let sv = StateVec::from_index(s);
        let gap = margin_at(q_star, &sv, gap_tolerance);
        if gap > 0.0 && gap < min_gap {
            min_gap = gap;
        }
    }
    if min_gap.is_finite() {
        Ok(min_gap)
    } else {
        Err(Error::Degenerate("all actions tie at every state".into()))
    }
}

/// The linear-class margin constant
/// delta0 = (6 mu_max sum_a max_{a': beta_a != beta_{a'}} ||beta_a - beta_{a'}||^-1)^-1.
pub fn linear_delta0(betas: &[DVector<f64>], mu_max: f64) -> Result<f64> {
    if mu_max <= 0.0 {
        return Err(Error::InvalidArgument("mu_max must be positive".into()));
    }
    if betas.len() < 2 {
        return Err(Error::InvalidArgument("need at least two action coefficient vectors".into()));
    }
    let mut sum = 0.0;
    let mut any = false;
    for (i, beta_a) in betas.iter().enumerate() {
        let mut best_inv: Option<f64> = None;
        for (j, beta_b) in betas.iter().enumerate() {
            if i == j {
                continue;
            }
            let dist = (beta_a - beta_b).norm();
            if dist > 0.0 {
                let inv = 1.0 / dist;
                best_inv = Some(best_inv.map_or(inv, |b: f64| b.max(inv)));
            }
        }
        if let Some(inv) = best_inv {
            any = true;
            sum += inv;
        }
    }
    if !any {
        return Err(Error::Degenerate("all action coefficient vectors are equal".into()));
    }
    Ok(1.0 / (6.0 * mu_max * sum))
}

/// Default probe set approximating the sup over greedy policies: the
/// reference greedy policy, the uniform-random policy, and `k` greedy
/// policies of random linear Q-functions in the coefficient ball.
pub fn default_probe_policies(
    reference: GreedyPolicy,
    features: Arc<dyn crate::features::FeatureMap>,
    ball_radius: f64,
    k: usize,
    seed: u64,
) -> Vec<Arc<dyn Policy>> {
    use rand::Rng;
    let num_actions = features.num_actions();
    let mut out: Vec<Arc<dyn Policy>> = vec![
        Arc::new(reference),
        Arc::new(crate::mdp::UniformRandomPolicy { num_actions }),
    ];
    for i in 0..k {
        let mut rng = substream(seed, i as u64);
        let dir: Vec<f64> =
            (0..features.dim()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let mut w = DVector::from_row_slice(&dir);
        let norm = w.norm();
        if norm > 0.0 {
            let radius = ball_radius * rng.random::<f64>().powf(1.0 / features.dim() as f64);
            w *= radius / norm;
        }
        let q = LinearQFunction::new(w, Arc::clone(&features), ball_radius);
        out.push(Arc::new(GreedyPolicy::new(Arc::new(q))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::random_tabular;
    use crate::mdp::{
        exact_occupancy, greedy_policy_table, value_iteration, ActionId, TabularMdp,
    };
    use crate::rng::rng_from_seed;

    #[test]
    fn margin_of_single_action_is_zero() {
        let q = TabularQFunction::from_values(1, 1, vec![5.0]).unwrap();
        assert_eq!(margin_at(&q, &StateVec::from_index(0), 1e-9), 0.0);
    }

    #[test]
    fn margin_is_gap_to_runner_up() {
        let q = TabularQFunction::from_values(1, 2, vec![3.0, 1.0]).unwrap();
        assert_eq!(margin_at(&q, &StateVec::from_index(0), 1e-9), 2.0);
    }

    #[test]
    fn tied_top_actions_use_best_outside_the_tie() {
        let q = TabularQFunction::from_values(1, 3, vec![2.0, 2.0, 0.0]).unwrap();
        assert_eq!(margin_at(&q, &StateVec::from_index(0), 1e-9), 2.0);
        let all_tied = TabularQFunction::from_values(1, 3, vec![2.0, 2.0, 2.0]).unwrap();
        assert_eq!(margin_at(&all_tied, &StateVec::from_index(0), 1e-9), 0.0);
    }

    #[test]
    fn occupancy_sample_small_gamma_returns_initial_states() {
        // initial state is 0, every transition moves to the absorbing state 1
        let mdp = MdpModel::Tabular(
            TabularMdp::new(
                2,
                1,
                vec![0.0, 0.0],
                vec![0.0, 1.0, 0.0, 1.0],
                vec![1.0, 0.0],
                0.01,
                1.0,
            )
            .unwrap(),
        );
        let policy = crate::mdp::UniformRandomPolicy { num_actions: 1 };
        let mut rng = rng_from_seed(2);
        let mut at_initial = 0;
        let draws = 10_000;
        for _ in 0..draws {
            if occupancy_sample(&mdp, &policy, &mut rng).index() == 0 {
                at_initial += 1;
            }
        }
        assert!(at_initial as f64 >= 0.95 * draws as f64, "only {at_initial} initial states");
    }

    #[test]
    fn occupancy_sample_absorbing_state() {
        let mdp = MdpModel::Tabular(
            TabularMdp::new(1, 1, vec![0.0], vec![1.0], vec![1.0], 0.9, 1.0).unwrap(),
        );
        let policy = crate::mdp::UniformRandomPolicy { num_actions: 1 };
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            assert_eq!(occupancy_sample(&mdp, &policy, &mut rng).index(), 0);
        }
    }

    #[test]
    fn occupancy_sample_matches_exact_occupancy() {
        let mdp_t = random_tabular(6, 4, 2, 1.0, 1.0).unwrap();
        let q = value_iteration(&mdp_t, 1e-10, 10_000).unwrap();
        let table = greedy_policy_table(&q);
        let exact = exact_occupancy(&mdp_t, &table).unwrap();
        let policy = GreedyPolicy::new(std::sync::Arc::new(q));
        let model = MdpModel::Tabular(mdp_t);
        let draws = 100_000usize;
        let mut counts = vec![0usize; 4];
        let mut rng = rng_from_seed(8);
        for _ in 0..draws {
            counts[occupancy_sample(&model, &policy, &mut rng).index()] += 1;
        }
        // per-state 3-standard-error check
        for s in 0..4 {
            let p = exact[s];
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = counts[s] as f64 / draws as f64;
            assert!((freq - p).abs() <= 3.0 * se + 1e-9, "state {s}: {freq} vs {p}");
        }
        // chi-square goodness of fit at p > 0.001
        let chi2: f64 = (0..4)
            .map(|s| {
                let expected = exact[s] * draws as f64;
                let diff = counts[s] as f64 - expected;
                diff * diff / expected.max(1e-12)
            })
            .sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.999);
        assert!(chi2 <= critical, "chi2 {chi2} above 0.999 quantile {critical}");
    }

    #[test]
    fn tabular_delta0_examples() {
        let q = TabularQFunction::from_values(2, 2, vec![1.0, 0.0, 3.0, 1.0]).unwrap();
        assert_eq!(tabular_delta0(&q, 1e-9).unwrap(), 1.0);
        let flat = TabularQFunction::from_values(2, 2, vec![4.0; 4]).unwrap();
        assert!(matches!(tabular_delta0(&flat, 1e-9), Err(Error::Degenerate(_))));
        let single = TabularQFunction::from_values(1, 3, vec![5.0, 2.0, 2.0]).unwrap();
        assert_eq!(tabular_delta0(&single, 1e-9).unwrap(), 3.0);
    }

    #[test]
    fn linear_delta0_examples() {
        let b0 = DVector::from_row_slice(&[0.0, 0.0]);
        let b1 = DVector::from_row_slice(&[1.0, 0.0]);
        let d0 = linear_delta0(&[b0.clone(), b1.clone()], 1.0).unwrap();
        assert!((d0 - 1.0 / 12.0).abs() < 1e-12);

        // homogeneity: scaling all betas by c scales delta0 by c
        let scaled: Vec<DVector<f64>> = [b0, b1].iter().map(|b| b * 3.0).collect();
        let d0s = linear_delta0(&scaled, 1.0).unwrap();
        assert!((d0s - 3.0 / 12.0).abs() < 1e-12);

        // three actions at mutual distance 2 with mu_max = 2
        let e0 = DVector::from_row_slice(&[0.0, 0.0]);
        let e1 = DVector::from_row_slice(&[2.0, 0.0]);
        let e2 = DVector::from_row_slice(&[1.0, 3.0f64.sqrt()]);
        let d0t = linear_delta0(&[e0, e1, e2], 2.0).unwrap();
        assert!((d0t - 1.0 / 18.0).abs() < 1e-12);

        let same = DVector::from_row_slice(&[1.0, 1.0]);
        assert!(linear_delta0(&[same.clone(), same], 1.0).is_err());
    }

    #[test]
    fn profile_flags_infinite_alpha_below_the_gap() {
        // all positive per-state margins are at least 0.5; a grid below 0.5
        // sees zero CDF everywhere, which is the alpha = infinity signature
        let mdp_t = TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 2.0],
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
            vec![0.5, 0.5],
            0.0,
            2.0,
        )
        .unwrap();
        let q = value_iteration(&mdp_t, 1e-12, 10).unwrap();
        let model = MdpModel::Tabular(mdp_t);
        let policy: Arc<dyn Policy> = Arc::new(crate::mdp::UniformRandomPolicy { num_actions: 2 });
        let grid = log_grid(1e-3, 0.4, 10);
        let cfg = ProfileConfig { samples_per_policy: 2000, ..Default::default() };
        let profile = estimate_profile(&model, &q, &[policy], &grid, &cfg).unwrap();
        assert!(profile.cdf_values.iter().all(|c| *c == 0.0));
        match profile.fit {
            MarginFit::Infinite { delta0 } => assert!((delta0 - 1.0).abs() < 1e-9),
            other => panic!("expected infinite fit, got {other:?}"),
        }
    }

    #[test]
    fn profile_degenerate_when_all_margins_zero() {
        let mdp_t = TabularMdp::new(
            1,
            2,
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![1.0],
            0.5,
            1.0,
        )
        .unwrap();
        let q = TabularQFunction::from_values(1, 2, vec![2.0, 2.0]).unwrap();
        let model = MdpModel::Tabular(mdp_t);
        let policy: Arc<dyn Policy> = Arc::new(crate::mdp::UniformRandomPolicy { num_actions: 2 });
        let grid = log_grid(1e-3, 1.0, 8);
        let cfg = ProfileConfig { samples_per_policy: 500, ..Default::default() };
        let profile = estimate_profile(&model, &q, &[policy], &grid, &cfg).unwrap();
        assert_eq!(profile.fit, MarginFit::Degenerate);
    }

    #[test]
    fn profile_json_and_csv_shapes() {
        let profile = MarginProfile {
            delta_grid: vec![0.1, 0.2],
            cdf_values: vec![0.05, 0.1],
            fit: MarginFit::PowerLaw { alpha: 1.0, delta0: 0.9, r_squared: 0.99 },
        };
        assert!(profile.to_csv().starts_with("delta,cdf\n0.1,0.05\n"));
        let v: serde_json::Value = serde_json::from_str(&profile.to_json()).unwrap();
        assert_eq!(v["alpha"], 1.0);
    }
}

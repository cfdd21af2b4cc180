//! The two-dimensional Beta-mixture benchmark MDP and a seeded random
//! tabular instance generator.
//!
//! The benchmark lives on S = [0,1]^2 with two actions and the simplex
//! feature map
//!
//! ```text
//! phi(s, a) = (s1(1-a), s1 a, 1-s1, s2(1-a), s2 a, 1-s2) / 2,
//! ```
//!
//! rewards r(s,a) = theta . phi(s,a), and next-state density
//! sum_k phi_k(s,a) Beta(10 a_k1, 10 b_k1)(s1') Beta(10 a_k2, 10 b_k2)(s2').
//! The 30 parameters (theta, then a_k1, b_k1, a_k2, b_k2 for k = 1..6) are
//! the first 30 Uniform(0,1) variates of a ChaCha8 stream seeded by
//! `BenchmarkSpec::seed`; the draw order is fixed so runs are reproducible.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::BehaviorSampler;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::mdp::{ActionId, LinearMdp, StateSampler, StateVec, TabularMdp};
use crate::rng::{rng_from_seed, ChaCha8Rng};

pub const BENCHMARK_FEATURE_DIM: usize = 6;
pub const BENCHMARK_STATE_DIM: usize = 2;
pub const BENCHMARK_NUM_ACTIONS: usize = 2;
/// Benchmark rewards lie in [0, 1]: theta is in [0,1]^6 and phi is in the
/// simplex, so theta . phi <= max theta <= 1.
pub const BENCHMARK_REWARD_BOUND: f64 = 1.0;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub seed: u64,
    pub gamma: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec { seed: 0, gamma: 0.9 }
    }
}

/// The 30 drawn parameters: reward vector plus Beta shape seeds in (0,1).
/// Shape parameters of component k, coordinate j are (10 alphas[k][j],
/// 10 betas[k][j]).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkParams {
    pub seed: u64,
    pub gamma: f64,
    pub theta: [f64; 6],
    pub alphas: [[f64; 2]; 6],
    pub betas: [[f64; 2]; 6],
}

impl BenchmarkParams {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("benchmark params serialize")
    }
}

fn positive_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws the 30 benchmark parameters in the documented order:
/// theta_1..theta_6, then (alpha_k1, beta_k1, alpha_k2, beta_k2) for each
/// mixture component k.
pub fn draw_benchmark_params(spec: &BenchmarkSpec) -> BenchmarkParams {
    let mut rng = rng_from_seed(spec.seed);
    let mut theta = [0.0; 6];
    for t in theta.iter_mut() {
        *t = rng.random();
    }
    let mut alphas = [[0.0; 2]; 6];
    let mut betas = [[0.0; 2]; 6];
    for k in 0..6 {
        for j in 0..2 {
            alphas[k][j] = positive_uniform(&mut rng);
            betas[k][j] = positive_uniform(&mut rng);
        }
    }
    BenchmarkParams { seed: spec.seed, gamma: spec.gamma, theta, alphas, betas }
}

/// The simplex feature map of the benchmark.
#[derive(Clone, Copy, Debug, Default)]
pub struct BenchmarkFeatures;

impl BenchmarkFeatures {
    fn check(&self, s: &StateVec, a: ActionId) -> Result<(f64, f64, f64)> {
        if s.dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "benchmark state must be 2-dimensional, got {}",
                s.dim()
            )));
        }
        let (s1, s2) = (s.as_slice()[0], s.as_slice()[1]);
        if !(0.0..=1.0).contains(&s1) || !(0.0..=1.0).contains(&s2) {
            return Err(Error::InvalidArgument(format!(
                "benchmark state ({s1}, {s2}) outside [0,1]^2"
            )));
        }
        if a.0 >= 2 {
            return Err(Error::InvalidArgument(format!("benchmark action {a} not in {{0,1}}")));
        }
        Ok((s1, s2, a.0 as f64))
    }
}

impl FeatureMap for BenchmarkFeatures {
    fn dim(&self) -> usize {
        BENCHMARK_FEATURE_DIM
    }

    fn num_actions(&self) -> usize {
        BENCHMARK_NUM_ACTIONS
    }

    fn eval_into(&self, s: &StateVec, a: ActionId, out: &mut [f64]) -> Result<()> {
        let (s1, s2, af) = self.check(s, a)?;
        out[0] = s1 * (1.0 - af) / 2.0;
        out[1] = s1 * af / 2.0;
        out[2] = (1.0 - s1) / 2.0;
        out[3] = s2 * (1.0 - af) / 2.0;
        out[4] = s2 * af / 2.0;
        out[5] = (1.0 - s2) / 2.0;
        debug_assert!(out.iter().map(|x| x * x).sum::<f64>() <= 1.0 + 1e-12);
        Ok(())
    }

    fn dot_weights(&self, s: &StateVec, a: ActionId, w: &[f64]) -> Result<f64> {
        let (s1, s2, af) = self.check(s, a)?;
        Ok((s1 * (1.0 - af) * w[0]
            + s1 * af * w[1]
            + (1.0 - s1) * w[2]
            + s2 * (1.0 - af) * w[3]
            + s2 * af * w[4]
            + (1.0 - s2) * w[5])
            / 2.0)
    }
}

/// phi(s, a) of the benchmark as a convenience entry point.
pub fn benchmark_features(s: &StateVec, a: ActionId) -> Result<DVector<f64>> {
    BenchmarkFeatures.eval(s, a)
}

struct BetaPairSampler {
    coord1: Beta<f64>,
    coord2: Beta<f64>,
}

impl StateSampler for BetaPairSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> StateVec {
        let x = self.coord1.sample(rng);
        let y = self.coord2.sample(rng);
        StateVec::new(&[x, y])
    }
}

struct UniformSquareSampler;

impl StateSampler for UniformSquareSampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> StateVec {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        StateVec::new(&[x, y])
    }
}

/// Builds the benchmark MDP from drawn parameters.
pub fn build_benchmark(spec: &BenchmarkSpec) -> LinearMdp {
    let params = draw_benchmark_params(spec);
    build_benchmark_from_params(&params)
}

pub fn build_benchmark_from_params(params: &BenchmarkParams) -> LinearMdp {
    let components: Vec<Arc<dyn StateSampler>> = (0..6)
        .map(|k| {
            Arc::new(BetaPairSampler {
                coord1: Beta::new(10.0 * params.alphas[k][0], 10.0 * params.betas[k][0])
                    .expect("positive Beta shapes"),
                coord2: Beta::new(10.0 * params.alphas[k][1], 10.0 * params.betas[k][1])
                    .expect("positive Beta shapes"),
            }) as Arc<dyn StateSampler>
        })
        .collect();
    LinearMdp::new(
        Arc::new(BenchmarkFeatures),
        DVector::from_row_slice(&params.theta),
        components,
        Arc::new(UniformSquareSampler),
        params.gamma,
        BENCHMARK_REWARD_BOUND,
    )
}

/// The uniform behavior policy of the benchmark: s ~ Unif([0,1]^2),
/// a ~ Bernoulli(0.5).
#[derive(Clone, Copy, Debug, Default)]
pub struct BenchmarkBehavior;

impl BehaviorSampler for BenchmarkBehavior {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (StateVec, ActionId) {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        let a = usize::from(rng.random::<f64>() < 0.5);
        (StateVec::new(&[x, y]), ActionId(a))
    }

    fn id(&self) -> String {
        "uniform-square-bernoulli-half".into()
    }
}

/// Seeded random tabular MDP: rewards iid Uniform(-M, M), transition rows
/// iid symmetric Dirichlet (via normalized Gamma draws), initial
/// distribution uniform.
pub fn random_tabular(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    reward_bound: f64,
    dirichlet_concentration: f64,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidArgument("empty state or action space".into()));
    }
    if reward_bound <= 0.0 || dirichlet_concentration <= 0.0 {
        return Err(Error::InvalidArgument(
            "reward bound and concentration must be positive".into(),
        ));
    }
    let mut rng = rng_from_seed(seed);
    let rewards: Vec<f64> = (0..num_states * num_actions)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * reward_bound)
        .collect();
    let gamma_dist = Gamma::new(dirichlet_concentration, 1.0)
        .map_err(|e| Error::InvalidArgument(format!("gamma distribution: {e}")))?;
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        if num_states == 1 {
            transitions.push(1.0);
            continue;
        }
        let mut row = loop {
            let draws: Vec<f64> = (0..num_states).map(|_| gamma_dist.sample(&mut rng)).collect();
            if draws.iter().sum::<f64>() > 0.0 {
                break draws;
            }
        };
        let total: f64 = row.iter().sum();
        let mut acc = 0.0;
        for p in row.iter_mut().take(num_states - 1) {
            *p /= total;
            acc += *p;
        }
        // assign the remainder to the last entry so the row sums exactly
        row[num_states - 1] = (1.0 - acc).max(0.0);
        transitions.extend(row);
    }
    let initial = vec![1.0 / num_states as f64; num_states];
    // uniform initial weights may not sum to exactly 1 in floating point;
    // fix the first entry
    let mut initial = initial;
    let correction: f64 = 1.0 - initial.iter().sum::<f64>();
    initial[0] += correction;
    TabularMdp::new(num_states, num_actions, rewards, transitions, initial, 0.9, reward_bound)
}

/// Same generator with an explicit discount.
pub fn random_tabular_with_gamma(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    reward_bound: f64,
    dirichlet_concentration: f64,
    gamma: f64,
) -> Result<TabularMdp> {
    let mut mdp = random_tabular(seed, num_states, num_actions, reward_bound, dirichlet_concentration)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma {gamma} not in [0,1)")));
    }
    mdp.gamma = gamma;
    Ok(mdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpModel;
    use crate::rng::substream;
    use proptest::prelude::*;

    #[test]
    fn features_at_corners() {
        let phi = benchmark_features(&StateVec::new(&[0.0, 0.0]), ActionId(0)).unwrap();
        assert_eq!(phi.as_slice(), &[0.0, 0.0, 0.5, 0.0, 0.0, 0.5]);
        let phi = benchmark_features(&StateVec::new(&[1.0, 1.0]), ActionId(1)).unwrap();
        assert_eq!(phi.as_slice(), &[0.0, 0.5, 0.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn features_reject_out_of_range() {
        assert!(benchmark_features(&StateVec::new(&[1.5, 0.0]), ActionId(0)).is_err());
        assert!(benchmark_features(&StateVec::new(&[0.5, -0.1]), ActionId(1)).is_err());
        assert!(benchmark_features(&StateVec::new(&[0.5, 0.5]), ActionId(2)).is_err());
    }

    proptest! {
        #[test]
        fn features_live_on_the_simplex(s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0, a in 0usize..2) {
            let phi = benchmark_features(&StateVec::new(&[s1, s2]), ActionId(a)).unwrap();
            let sum: f64 = phi.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-14);
            prop_assert!(phi.iter().all(|x| *x >= 0.0));
            prop_assert!(phi.norm() <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn same_seed_same_params() {
        let spec = BenchmarkSpec { seed: 42, gamma: 0.9 };
        let a = draw_benchmark_params(&spec);
        let b = draw_benchmark_params(&spec);
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.alphas, b.alphas);
        assert_eq!(a.betas, b.betas);
        let c = draw_benchmark_params(&BenchmarkSpec { seed: 43, gamma: 0.9 });
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn next_states_stay_in_unit_square() {
        let mdp = build_benchmark(&BenchmarkSpec::default());
        let mut rng = substream(3, 0);
        let mut s = StateVec::new(&[0.3, 0.8]);
        for i in 0..500 {
            let (r, next) = mdp.sample_step(&s, ActionId(i % 2), &mut rng);
            assert!((0.0..=1.0).contains(&r));
            let sl = next.as_slice();
            assert!((0.0..=1.0).contains(&sl[0]) && (0.0..=1.0).contains(&sl[1]));
            s = next;
        }
    }

    #[test]
    fn mixture_mean_matches_analytic() {
        // E[s'_j | s,a] = sum_k phi_k(s,a) * a_kj / (a_kj + b_kj) with the
        // Beta mean identity as oracle.
        let spec = BenchmarkSpec::default();
        let params = draw_benchmark_params(&spec);
        let mdp = build_benchmark(&spec);
        let s = StateVec::new(&[0.25, 0.7]);
        let a = ActionId(1);
        let phi = benchmark_features(&s, a).unwrap();
        let mut expected = [0.0; 2];
        for j in 0..2 {
            for k in 0..6 {
                let ak = 10.0 * params.alphas[k][j];
                let bk = 10.0 * params.betas[k][j];
                expected[j] += phi[k] * ak / (ak + bk);
            }
        }
        let n = 1_000_000usize;
        let mut rng = substream(11, 0);
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let (_, next) = mdp.sample_step(&s, a, &mut rng);
            for j in 0..2 {
                sums[j] += next.as_slice()[j];
                sq[j] += next.as_slice()[j] * next.as_slice()[j];
            }
        }
        for j in 0..2 {
            let mean = sums[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - expected[j]).abs() <= 3.0 * se,
                "coordinate {j}: {mean} vs {} (se {se})",
                expected[j]
            );
        }
    }

    #[test]
    fn bellman_image_of_linear_function_is_linear() {
        // Monte-Carlo backups of a random linear f regressed onto phi leave
        // residuals within Monte-Carlo noise at 100 random probe points.
        use nalgebra::{DMatrix, DVector};
        let spec = BenchmarkSpec::default();
        let mdp = build_benchmark(&spec);
        let mut rng = substream(17, 0);
        let w: Vec<f64> = (0..6).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let fm = BenchmarkFeatures;
        let probes = 100usize;
        let draws = 4000usize;
        let mut design = DMatrix::zeros(probes, 6);
        let mut targets = DVector::zeros(probes);
        let mut ses = vec![0.0; probes];
        for i in 0..probes {
            let s = StateVec::new(&[rng.random(), rng.random()]);
            let a = ActionId(usize::from(rng.random::<f64>() < 0.5));
            let phi = fm.eval(&s, a).unwrap();
            for j in 0..6 {
                design[(i, j)] = phi[j];
            }
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..draws {
                let (_, next) = mdp.sample_step(&s, a, &mut rng);
                let v = (0..2)
                    .map(|ap| fm.dot_weights(&next, ActionId(ap), &w).unwrap())
                    .fold(f64::NEG_INFINITY, f64::max);
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / draws as f64;
            let var = (sumsq / draws as f64 - mean * mean).max(0.0);
            ses[i] = mdp.gamma * (var / draws as f64).sqrt();
            targets[i] = mdp.mean_reward(&s, a) + mdp.gamma * mean;
        }
        let svd = design.clone().svd(true, true);
        let coeff = svd.solve(&targets, 1e-10).expect("solvable");
        let fitted = design * coeff;
        for i in 0..probes {
            let resid = (targets[i] - fitted[i]).abs();
            assert!(
                resid <= 5.0 * ses[i].max(1e-6),
                "probe {i}: residual {resid} exceeds 5 se {}",
                ses[i]
            );
        }
    }

    #[test]
    fn random_tabular_single_state_is_trivial() {
        let mdp = random_tabular(9, 1, 3, 1.0, 0.5).unwrap();
        for a in 0..3 {
            assert_eq!(mdp.transition_row(0, a), &[1.0]);
        }
    }

    #[test]
    fn random_tabular_is_deterministic() {
        let a = random_tabular(5, 4, 2, 1.0, 1.0).unwrap();
        let b = random_tabular(5, 4, 2, 1.0, 1.0).unwrap();
        assert_eq!(a.reward(2, 1), b.reward(2, 1));
        assert_eq!(a.transition_row(3, 0), b.transition_row(3, 0));
    }

    #[test]
    fn random_tabular_high_concentration_is_near_uniform() {
        let mdp = random_tabular(1, 10, 1, 1.0, 1e4).unwrap();
        for s in 0..10 {
            for p in mdp.transition_row(s, 0) {
                assert!((p - 0.1).abs() < 0.05, "entry {p} far from 1/10");
            }
        }
    }

    #[test]
    fn benchmark_behavior_action_frequency() {
        let mdp = MdpModel::Linear(build_benchmark(&BenchmarkSpec::default()));
        let ds = crate::data::draw_dataset(&mdp, &BenchmarkBehavior, 100_000, 21).unwrap();
        let ones = ds.samples.iter().filter(|t| t.action.0 == 1).count() as f64;
        let freq = ones / ds.n() as f64;
        let tol = 3.0 * (0.25f64 / ds.n() as f64).sqrt();
        assert!((freq - 0.5).abs() <= tol, "action frequency {freq}");
    }
}

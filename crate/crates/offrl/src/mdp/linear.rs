//! Linear MDPs: r(s,a) = theta . phi(s,a) and next-state law equal to the
//! phi(s,a)-weighted mixture of per-component measures nu_k.

use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::features::FeatureMap;
use crate::mdp::{ActionId, StateVec};
use crate::rng::ChaCha8Rng;

/// Draws states for one mixture component (a measure nu_k) or for the
/// initial distribution mu.
pub trait StateSampler: Send + Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> StateVec;
}

pub struct LinearMdp {
    features: Arc<dyn FeatureMap>,
    theta: DVector<f64>,
    /// One sampler per feature component; selected with probability
    /// phi_k(s, a). Requires phi to be a sub-probability weight vector.
    components: Vec<Arc<dyn StateSampler>>,
    initial: Arc<dyn StateSampler>,
    pub gamma: f64,
    pub reward_bound: f64,
    /// Optional truncated Gaussian reward noise (sigma); default off. The
    /// draw is clamped so |r| <= reward_bound.
    pub reward_noise_sigma: Option<f64>,
}

impl LinearMdp {
    pub fn new(
        features: Arc<dyn FeatureMap>,
        theta: DVector<f64>,
        components: Vec<Arc<dyn StateSampler>>,
        initial: Arc<dyn StateSampler>,
        gamma: f64,
        reward_bound: f64,
    ) -> Self {
        assert_eq!(components.len(), features.dim(), "one sampler per feature component");
        assert!((0.0..1.0).contains(&gamma));
        LinearMdp {
            features,
            theta,
            components,
            initial,
            gamma,
            reward_bound,
            reward_noise_sigma: None,
        }
    }

    pub fn with_reward_noise(mut self, sigma: f64) -> Self {
        self.reward_noise_sigma = Some(sigma);
        self
    }

    pub fn features(&self) -> Arc<dyn FeatureMap> {
        Arc::clone(&self.features)
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    /// Mean reward theta . phi(s, a).
    pub fn mean_reward(&self, s: &StateVec, a: ActionId) -> f64 {
        self.features
            .dot_weights(s, a, self.theta.as_slice())
            .expect("state outside the feature map's domain")
    }

    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> StateVec {
        self.initial.sample(rng)
    }

    pub fn sample_step(&self, s: &StateVec, a: ActionId, rng: &mut ChaCha8Rng) -> (f64, StateVec) {
        let mut r = self.mean_reward(s, a);
        if let Some(sigma) = self.reward_noise_sigma {
            use rand_distr::Distribution;
            let noise: f64 = rand_distr::Normal::new(0.0, sigma).expect("valid sigma").sample(rng);
            r = (r + noise).clamp(-self.reward_bound, self.reward_bound);
        }
        let d = self.features.dim();
        let mut weights = vec![0.0; d];
        self.features
            .eval_into(s, a, &mut weights)
            .expect("state outside the feature map's domain");
        debug_assert!(
            weights.iter().all(|w| *w >= -1e-12),
            "mixture weights must be nonnegative"
        );
        debug_assert!(
            weights.iter().map(|w| w * w).sum::<f64>() <= 1.0 + 1e-9,
            "||phi(s,a)|| must stay within the unit ball"
        );
        let total: f64 = weights.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-9, "mixture weights must sum to 1, got {total}");
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut k = d - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        (r, self.components[k].sample(rng))
    }
}

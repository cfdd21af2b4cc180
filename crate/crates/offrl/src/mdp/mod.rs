//! State/action/MDP abstractions, the Bellman optimality operator, exact
//! tabular solvers, and trajectory sampling.

mod linear;
mod tabular;

pub use linear::{LinearMdp, StateSampler};
pub use tabular::{
    bellman_backup, exact_occupancy, exact_policy_value, greedy_policy_table, value_iteration,
    value_iteration_default, TabularMdp, TabularQFunction, DEFAULT_VI_TOL, DENSE_OCCUPANCY_LIMIT,
};

use crate::rng::ChaCha8Rng;

/// Maximum state dimension held inline. Benchmark states are 2-dimensional
/// and tabular states use a single index coordinate.
pub const MAX_STATE_DIM: usize = 4;

/// A state: a short vector of finite real coordinates with a fixed dimension
/// per MDP. Tabular states are represented by a single index coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateVec {
    coords: [f64; MAX_STATE_DIM],
    dim: usize,
}

impl StateVec {
    pub fn new(coords: &[f64]) -> Self {
        assert!(
            coords.len() <= MAX_STATE_DIM,
            "state dimension {} exceeds maximum {MAX_STATE_DIM}",
            coords.len()
        );
        debug_assert!(coords.iter().all(|c| c.is_finite()), "non-finite state coordinate");
        let mut buf = [0.0; MAX_STATE_DIM];
        buf[..coords.len()].copy_from_slice(coords);
        StateVec { coords: buf, dim: coords.len() }
    }

    /// Tabular state from a discrete index.
    pub fn from_index(index: usize) -> Self {
        StateVec::new(&[index as f64])
    }

    /// Discrete index of a tabular state.
    pub fn index(&self) -> usize {
        self.coords[0] as usize
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim]
    }
}

/// An action index in 0..|A|.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

impl std::fmt::Display for ActionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A state-action value function.
pub trait QFunction: Send + Sync {
    fn num_actions(&self) -> usize;
    fn value(&self, s: &StateVec, a: ActionId) -> f64;

    fn max_value(&self, s: &StateVec) -> f64 {
        (0..self.num_actions())
            .map(|a| self.value(s, ActionId(a)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A (possibly stochastic) policy. Deterministic policies ignore the rng.
pub trait Policy: Send + Sync {
    fn act(&self, s: &StateVec, rng: &mut ChaCha8Rng) -> ActionId;
}

/// Uniform-at-random over the action set.
#[derive(Clone, Copy, Debug)]
pub struct UniformRandomPolicy {
    pub num_actions: usize,
}

impl Policy for UniformRandomPolicy {
    fn act(&self, _s: &StateVec, rng: &mut ChaCha8Rng) -> ActionId {
        use rand::Rng;
        ActionId(rng.random_range(0..self.num_actions))
    }
}

/// A fixed-length rollout under a single policy.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub horizon: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub state: StateVec,
    pub action: ActionId,
    pub reward: f64,
}

/// An MDP we can sample from: either an exact tabular model or a linear
/// model with feature-mixture transitions.
pub enum MdpModel {
    Tabular(TabularMdp),
    Linear(LinearMdp),
}

impl MdpModel {
    pub fn num_actions(&self) -> usize {
        match self {
            MdpModel::Tabular(m) => m.num_actions,
            MdpModel::Linear(m) => m.num_actions(),
        }
    }

    pub fn discount(&self) -> f64 {
        match self {
            MdpModel::Tabular(m) => m.gamma,
            MdpModel::Linear(m) => m.gamma,
        }
    }

    /// Declared bound M on |r|.
    pub fn reward_bound(&self) -> f64 {
        match self {
            MdpModel::Tabular(m) => m.reward_bound,
            MdpModel::Linear(m) => m.reward_bound,
        }
    }

    pub fn as_tabular(&self) -> Option<&TabularMdp> {
        match self {
            MdpModel::Tabular(m) => Some(m),
            MdpModel::Linear(_) => None,
        }
    }

    pub fn sample_initial(&self, rng: &mut ChaCha8Rng) -> StateVec {
        match self {
            MdpModel::Tabular(m) => m.sample_initial(rng),
            MdpModel::Linear(m) => m.sample_initial(rng),
        }
    }

    /// Draws (reward, next state) from (P_r, P_s) at (s, a).
    pub fn sample_step(&self, s: &StateVec, a: ActionId, rng: &mut ChaCha8Rng) -> (f64, StateVec) {
        match self {
            MdpModel::Tabular(m) => m.sample_step(s, a, rng),
            MdpModel::Linear(m) => m.sample_step(s, a, rng),
        }
    }
}

/// Samples a trajectory of exactly `horizon` steps: s0 ~ mu, a_t ~ pi(.|s_t),
/// r_t ~ P_r, s_{t+1} ~ P_s. Deterministic given the rng state.
pub fn sample_trajectory(
    mdp: &MdpModel,
    policy: &dyn Policy,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let mut steps = Vec::with_capacity(horizon);
    let mut state = mdp.sample_initial(rng);
    for _ in 0..horizon {
        let action = policy.act(&state, rng);
        let (reward, next) = mdp.sample_step(&state, action, rng);
        steps.push(TrajectoryStep { state, action, reward });
        state = next;
    }
    Trajectory { steps, horizon }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn deterministic_two_state() -> TabularMdp {
        // r = [[1,0],[0,1]], next state = action, gamma = 0.5
        TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![
                1.0, 0.0, 0.0, 1.0, // from s=0: a=0 -> s'=0, a=1 -> s'=1
                1.0, 0.0, 0.0, 1.0, // from s=1
            ],
            vec![0.5, 0.5],
            0.5,
            1.0,
        )
        .unwrap()
    }

    struct ConstPolicy(usize);
    impl Policy for ConstPolicy {
        fn act(&self, _s: &StateVec, _rng: &mut ChaCha8Rng) -> ActionId {
            ActionId(self.0)
        }
    }

    #[test]
    fn zero_horizon_trajectory_is_empty() {
        let mdp = MdpModel::Tabular(deterministic_two_state());
        let traj = sample_trajectory(&mdp, &ConstPolicy(0), 0, &mut rng_from_seed(1));
        assert!(traj.steps.is_empty());
        assert_eq!(traj.horizon, 0);
    }

    #[test]
    fn deterministic_mdp_and_policy_ignore_seed() {
        // single initial state so the whole rollout is deterministic
        let mdp = MdpModel::Tabular(
            TabularMdp::new(
                2,
                2,
                vec![1.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
                vec![1.0, 0.0],
                0.5,
                1.0,
            )
            .unwrap(),
        );
        let t1 = sample_trajectory(&mdp, &ConstPolicy(1), 5, &mut rng_from_seed(1));
        let t2 = sample_trajectory(&mdp, &ConstPolicy(1), 5, &mut rng_from_seed(999));
        assert_eq!(t1.steps, t2.steps);
    }

    #[test]
    fn seeded_replay_is_identical() {
        let mdp = MdpModel::Tabular(deterministic_two_state());
        let pol = UniformRandomPolicy { num_actions: 2 };
        let t1 = sample_trajectory(&mdp, &pol, 50, &mut rng_from_seed(7));
        let t2 = sample_trajectory(&mdp, &pol, 50, &mut rng_from_seed(7));
        assert_eq!(t1.steps, t2.steps);
    }
}

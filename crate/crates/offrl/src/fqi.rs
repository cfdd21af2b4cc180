//! Linear fitted Q-iteration: per-iteration least squares on bootstrapped
//! Bellman targets, a zero fallback on singular designs, projection onto a
//! Euclidean coefficient ball, and greedy-policy extraction.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::data::{Dataset, FeatureData};
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::{project_ball, SymmetricPsd};
use crate::mdp::{ActionId, Policy, QFunction, StateVec};
use crate::rng::ChaCha8Rng;

/// How the per-iteration regression treats a rank-deficient design matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regression {
    /// Coefficients are set to zero whenever lambda_min(Sigma-hat) is at or
    /// below the singular tolerance.
    ZeroOnSingular,
    /// Minimum-norm least squares via the pseudo-inverse of Sigma-hat. The
    /// simplex feature map of the benchmark satisfies two affine identities,
    /// so its design matrix is always rank-deficient and this is the only
    /// regression that can fit it.
    MinimumNorm,
}

#[derive(Clone, Debug)]
pub struct FqiConfig {
    /// Iteration count K >= 1.
    pub iterations: usize,
    /// Coefficient ball radius B.
    pub ball_radius: f64,
    /// Discount used in the bootstrapped targets.
    pub gamma: f64,
    /// Designs with lambda_min at or below this are treated as singular.
    /// `None` uses the relative default 1e-8 * n.
    pub singular_tolerance: Option<f64>,
    /// Starting coefficients (zero when unset).
    pub initial_weights: Option<Vec<f64>>,
    pub regression: Regression,
}

impl FqiConfig {
    pub fn new(iterations: usize, ball_radius: f64, gamma: f64) -> Self {
        FqiConfig {
            iterations,
            ball_radius,
            gamma,
            singular_tolerance: None,
            initial_weights: None,
            regression: Regression::ZeroOnSingular,
        }
    }

    pub fn with_regression(mut self, regression: Regression) -> Self {
        self.regression = regression;
        self
    }
}

/// A linear Q-function w . phi(s, a) with ||w|| <= ball_radius.
#[derive(Clone)]
pub struct LinearQFunction {
    pub weights: DVector<f64>,
    pub features: Arc<dyn FeatureMap>,
    pub ball_radius: f64,
    /// Iterations used by the fit that produced these weights.
    pub iterations: usize,
}

impl LinearQFunction {
    pub fn new(weights: DVector<f64>, features: Arc<dyn FeatureMap>, ball_radius: f64) -> Self {
        LinearQFunction { weights, features, ball_radius, iterations: 0 }
    }

    /// JSON export `{d, B, K, weights}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            d: usize,
            #[serde(rename = "B")]
            b: f64,
            #[serde(rename = "K")]
            k: usize,
            weights: &'a [f64],
        }
        serde_json::to_string(&Doc {
            d: self.weights.len(),
            b: self.ball_radius,
            k: self.iterations,
            weights: self.weights.as_slice(),
        })
        .expect("weights serialize")
    }
}

impl QFunction for LinearQFunction {
    fn num_actions(&self) -> usize {
        self.features.num_actions()
    }

    fn value(&self, s: &StateVec, a: ActionId) -> f64 {
        self.features
            .dot_weights(s, a, self.weights.as_slice())
            .expect("state outside the feature map's domain")
    }
}

enum Solver {
    Zero,
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    PseudoInverse(nalgebra::DMatrix<f64>),
}

impl Solver {
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Solver::Zero => DVector::zeros(b.len()),
            Solver::Cholesky(chol) => chol.solve(b),
            Solver::PseudoInverse(pinv) => pinv * b,
        }
    }
}

fn build_solver(fd: &FeatureData, config: &FqiConfig) -> Solver {
    let tol = config.singular_tolerance.unwrap_or(1e-8 * fd.n() as f64);
    match config.regression {
        Regression::ZeroOnSingular => {
            if fd.lambda_min > tol {
                match fd.sigma_hat.clone().cholesky() {
                    Some(chol) => Solver::Cholesky(chol),
                    // PSD with lambda_min > tol, so this is unreachable in
                    // exact arithmetic; fall back to the pseudo-inverse.
                    None => Solver::PseudoInverse(
                        SymmetricPsd::new(&fd.sigma_hat).pseudo_inverse(1e-12),
                    ),
                }
            } else {
                Solver::Zero
            }
        }
        Regression::MinimumNorm => {
            Solver::PseudoInverse(SymmetricPsd::new(&fd.sigma_hat).pseudo_inverse(1e-12))
        }
    }
}

fn initial_weights(fd: &FeatureData, config: &FqiConfig) -> Result<DVector<f64>> {
    match &config.initial_weights {
        Some(w) => {
            if w.len() != fd.dim() {
                return Err(Error::Dimension(format!(
                    "initial weights have {} entries, features have {}",
                    w.len(),
                    fd.dim()
                )));
            }
            Ok(DVector::from_row_slice(w))
        }
        None => Ok(DVector::zeros(fd.dim())),
    }
}

/// Runs K fitted Q-iteration steps and returns the final Q-function.
pub fn fqi_fit(
    dataset: &Dataset,
    features: Arc<dyn FeatureMap>,
    config: &FqiConfig,
) -> Result<LinearQFunction> {
    let (q, _) = fqi_fit_inner(dataset, features, config, false)?;
    Ok(q)
}

/// As [`fqi_fit`], additionally returning every iterate w_1..w_K.
pub fn fqi_fit_with_trace(
    dataset: &Dataset,
    features: Arc<dyn FeatureMap>,
    config: &FqiConfig,
) -> Result<(LinearQFunction, Vec<DVector<f64>>)> {
    let (q, trace) = fqi_fit_inner(dataset, features, config, true)?;
    Ok((q, trace.expect("trace requested")))
}

fn fqi_fit_inner(
    dataset: &Dataset,
    features: Arc<dyn FeatureMap>,
    config: &FqiConfig,
    keep_trace: bool,
) -> Result<(LinearQFunction, Option<Vec<DVector<f64>>>)> {
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("FQI needs at least one iteration".into()));
    }
    if config.ball_radius <= 0.0 {
        return Err(Error::InvalidArgument("ball radius must be positive".into()));
    }
    if dataset.n() == 0 {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let fd = FeatureData::new(dataset, Arc::clone(&features))?;
    let solver = build_solver(&fd, config);
    let mut w = initial_weights(&fd, config)?;
    let mut trace = keep_trace.then(Vec::new);
    for _ in 0..config.iterations {
        let y = fd.targets(&w, config.gamma)?;
        let b = fd.phi.transpose() * y;
        let unprojected = solver.solve(&b);
        w = project_ball(&unprojected, config.ball_radius);
        if let Some(t) = trace.as_mut() {
            t.push(w.clone());
        }
    }
    let mut q = LinearQFunction::new(w, features, config.ball_radius);
    q.iterations = config.iterations;
    Ok((q, trace))
}

/// Iteration count threshold ceil(max(1, log(lambda0^2 n / (72 d)^2) /
/// (2 log(1/gamma)))) above which the fit error is dominated by the
/// statistical term rather than the contraction term.
pub fn min_iterations(n: usize, lambda0: f64, d: usize, gamma: f64) -> usize {
    assert!(n >= 1 && d >= 1, "n and d must be at least 1");
    assert!(lambda0 > 0.0 && lambda0 <= 1.0, "lambda0 must be in (0, 1]");
    assert!((0.0..1.0).contains(&gamma) && gamma > 0.0, "gamma must be in (0, 1)");
    let ratio = lambda0 * lambda0 * n as f64 / (72.0 * d as f64).powi(2);
    let value = ratio.ln() / (2.0 * (1.0 / gamma).ln());
    value.max(1.0).ceil() as usize
}

/// Smallest action index attaining max_a q(s, a).
pub fn greedy_action(q: &dyn QFunction, s: &StateVec) -> ActionId {
    let mut best = 0;
    let mut best_val = q.value(s, ActionId(0));
    for a in 1..q.num_actions() {
        let v = q.value(s, ActionId(a));
        if v > best_val {
            best = a;
            best_val = v;
        }
    }
    ActionId(best)
}

/// The deterministic greedy policy of a Q-function (lowest-index ties).
#[derive(Clone)]
pub struct GreedyPolicy {
    q: Arc<dyn QFunction>,
}

impl GreedyPolicy {
    pub fn new(q: Arc<dyn QFunction>) -> Self {
        GreedyPolicy { q }
    }

    pub fn q(&self) -> &dyn QFunction {
        self.q.as_ref()
    }

    pub fn q_arc(&self) -> Arc<dyn QFunction> {
        Arc::clone(&self.q)
    }

    pub fn action(&self, s: &StateVec) -> ActionId {
        greedy_action(self.q.as_ref(), s)
    }

    /// Action table over a finite state space.
    pub fn table(&self, num_states: usize) -> Vec<ActionId> {
        (0..num_states).map(|s| self.action(&StateVec::from_index(s))).collect()
    }
}

impl Policy for GreedyPolicy {
    fn act(&self, s: &StateVec, _rng: &mut ChaCha8Rng) -> ActionId {
        self.action(s)
    }
}

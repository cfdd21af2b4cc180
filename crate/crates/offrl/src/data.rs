//! Offline dataset generation and design-matrix statistics.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::linalg::SymmetricPsd;
use crate::mdp::{ActionId, MdpModel, StateVec};
use crate::rng::{rng_from_seed, ChaCha8Rng};

/// One offline tuple (s, a, r, s').
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionSample {
    pub state: StateVec,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateVec,
}

/// The iid offline dataset D drawn under a behavior policy.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<TransitionSample>,
    pub seed: u64,
    pub behavior_id: String,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

/// A joint sampler over (s, a) pairs; the paper's mu_b is a distribution
/// over pairs rather than a conditional.
pub trait BehaviorSampler: Send + Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (StateVec, ActionId);
    fn id(&self) -> String;
}

/// Uniform over a finite state-action grid.
#[derive(Clone, Copy, Debug)]
pub struct TabularUniformBehavior {
    pub num_states: usize,
    pub num_actions: usize,
}

impl BehaviorSampler for TabularUniformBehavior {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (StateVec, ActionId) {
        use rand::Rng;
        let s = rng.random_range(0..self.num_states);
        let a = rng.random_range(0..self.num_actions);
        (StateVec::from_index(s), ActionId(a))
    }

    fn id(&self) -> String {
        format!("tabular-uniform-{}x{}", self.num_states, self.num_actions)
    }
}

/// Draws n iid tuples (s_i, a_i) ~ mu_b, r_i ~ P_r, s'_i ~ P_s.
/// Bit-identical for a fixed (mdp, behavior, n, seed).
pub fn draw_dataset(
    mdp: &MdpModel,
    behavior: &dyn BehaviorSampler,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("dataset size must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let (state, action) = behavior.sample(&mut rng);
        let (reward, next_state) = mdp.sample_step(&state, action, &mut rng);
        samples.push(TransitionSample { state, action, reward, next_state });
    }
    Ok(Dataset { samples, seed, behavior_id: behavior.id() })
}

/// The empirical design matrix Sigma-hat = sum_i phi_i phi_i^T and its
/// minimum eigenvalue.
#[derive(Clone, Debug)]
pub struct DesignStats {
    pub sigma_hat: DMatrix<f64>,
    pub lambda_min: f64,
    pub n: usize,
}

pub fn design_stats(dataset: &Dataset, features: &dyn FeatureMap) -> Result<DesignStats> {
    let d = features.dim();
    let mut sigma = DMatrix::zeros(d, d);
    let mut phi = vec![0.0; d];
    for (i, t) in dataset.samples.iter().enumerate() {
        features.eval_into(&t.state, t.action, &mut phi)?;
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value at sample {i}")));
        }
        for r in 0..d {
            for c in r..d {
                sigma[(r, c)] += phi[r] * phi[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..r {
            sigma[(r, c)] = sigma[(c, r)];
        }
    }
    let lambda_min = SymmetricPsd::new(&sigma).lambda_min;
    Ok(DesignStats { sigma_hat: sigma, lambda_min, n: dataset.n() })
}

/// Per-dataset feature precomputation shared by the estimators: features at
/// (s_i, a_i), features at (s'_i, a) for every action, rewards, and the
/// design matrix. Computed once so iterative fits never re-evaluate phi.
pub struct FeatureData {
    pub phi: DMatrix<f64>,
    /// One n x d matrix per action a, row i = phi(s'_i, a).
    pub next_phi: Vec<DMatrix<f64>>,
    pub rewards: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub lambda_min: f64,
    pub features: Arc<dyn FeatureMap>,
}

impl FeatureData {
    pub fn new(dataset: &Dataset, features: Arc<dyn FeatureMap>) -> Result<Self> {
        let n = dataset.n();
        let d = features.dim();
        let num_actions = features.num_actions();
        let mut phi = DMatrix::zeros(n, d);
        let mut next_phi = vec![DMatrix::zeros(n, d); num_actions];
        let mut rewards = DVector::zeros(n);
        let mut buf = vec![0.0; d];
        for (i, t) in dataset.samples.iter().enumerate() {
            features.eval_into(&t.state, t.action, &mut buf)?;
            if buf.iter().any(|x| !x.is_finite()) || !t.reward.is_finite() {
                return Err(Error::Data(format!("non-finite value at sample {i}")));
            }
            for j in 0..d {
                phi[(i, j)] = buf[j];
            }
            rewards[i] = t.reward;
            for (a, m) in next_phi.iter_mut().enumerate() {
                features.eval_into(&t.next_state, ActionId(a), &mut buf)?;
                for j in 0..d {
                    m[(i, j)] = buf[j];
                }
            }
        }
        let sigma_hat = phi.transpose() * &phi;
        let lambda_min = SymmetricPsd::new(&sigma_hat).lambda_min;
        Ok(FeatureData { phi, next_phi, rewards, sigma_hat, lambda_min, features })
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// Bellman targets y_i = r_i + gamma * max_a phi(s'_i, a) . w.
    /// Errors name the first sample with a non-finite target.
    pub fn targets(&self, weights: &DVector<f64>, gamma: f64) -> Result<DVector<f64>> {
        let mut best = &self.next_phi[0] * weights;
        for m in &self.next_phi[1..] {
            let vals = m * weights;
            best.zip_apply(&vals, |b, v| *b = b.max(v));
        }
        let y = &self.rewards + best * gamma;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite regression target at sample {i}")));
        }
        Ok(y)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetSidecar {
    n: usize,
    seed: u64,
    behavior_id: String,
}

fn fmt_float(x: f64) -> String {
    // shortest round-trip decimal form
    format!("{x}")
}

impl Dataset {
    /// CSV with header `s0,..,a,r,sp0,..`; floats in shortest round-trip
    /// decimal form so a read-back reproduces results exactly.
    pub fn to_csv(&self) -> String {
        let dim = self.samples.first().map(|t| t.state.dim()).unwrap_or(0);
        let mut out = String::new();
        for j in 0..dim {
            out.push_str(&format!("s{j},"));
        }
        out.push_str("a,r,");
        let next_cols: Vec<String> = (0..dim).map(|j| format!("sp{j}")).collect();
        out.push_str(&next_cols.join(","));
        out.push('\n');
        for t in &self.samples {
            let mut fields: Vec<String> =
                t.state.as_slice().iter().map(|x| fmt_float(*x)).collect();
            fields.push(format!("{}", t.action.0));
            fields.push(fmt_float(t.reward));
            fields.extend(t.next_state.as_slice().iter().map(|x| fmt_float(*x)));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string(&DatasetSidecar {
            n: self.n(),
            seed: self.seed,
            behavior_id: self.behavior_id.clone(),
        })
        .expect("sidecar serialize")
    }

    pub fn from_csv(csv: &str, sidecar: &str) -> Result<Self> {
        let meta: DatasetSidecar =
            serde_json::from_str(sidecar).map_err(|e| Error::Data(format!("sidecar: {e}")))?;
        let mut lines = csv.lines();
        let header = lines.next().ok_or_else(|| Error::Data("empty csv".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        let dim = cols.iter().take_while(|c| c.starts_with('s') && !c.starts_with("sp")).count();
        let mut samples = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 2 * dim + 2 {
                return Err(Error::Data(format!(
                    "csv line {}: {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    2 * dim + 2
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|e| Error::Data(format!("csv line {}: {e}", lineno + 2)))
            };
            let state: Vec<f64> = fields[..dim].iter().map(|s| parse(s)).collect::<Result<_>>()?;
            let action: usize = fields[dim]
                .parse()
                .map_err(|e| Error::Data(format!("csv line {}: {e}", lineno + 2)))?;
            let reward = parse(fields[dim + 1])?;
            let next: Vec<f64> =
                fields[dim + 2..].iter().map(|s| parse(s)).collect::<Result<_>>()?;
            samples.push(TransitionSample {
                state: StateVec::new(&state),
                action: ActionId(action),
                reward,
                next_state: StateVec::new(&next),
            });
        }
        if samples.len() != meta.n {
            return Err(Error::Data(format!(
                "csv has {} rows, sidecar says {}",
                samples.len(),
                meta.n
            )));
        }
        Ok(Dataset { samples, seed: meta.seed, behavior_id: meta.behavior_id })
    }

    pub fn write_files(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv())?;
        std::fs::write(sidecar_path, self.sidecar_json())?;
        Ok(())
    }

    pub fn read_files(csv_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let csv = std::fs::read_to_string(csv_path)?;
        let sidecar = std::fs::read_to_string(sidecar_path)?;
        Dataset::from_csv(&csv, &sidecar)
    }
}

//! Config-driven experiment orchestration: seeded replication sweeps over
//! sample sizes and estimators, CSV logging, and log-log slope fits.

use std::collections::HashSet;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::benchmark::{
    build_benchmark, random_tabular_with_gamma, BenchmarkBehavior, BenchmarkSpec,
};
use crate::bounds::tabular_completeness_b;
use crate::data::{draw_dataset, BehaviorSampler, TabularUniformBehavior};
use crate::error::{Error, Result};
use crate::eval::{estimate_regret, reference_optimal, EvalConfig, ReferenceConfig};
use crate::features::{FeatureMap, OneHotFeatures};
use crate::fqi::{fqi_fit, FqiConfig, GreedyPolicy, Regression};
use crate::kv::{parse_bool, parse_kv, parse_num, parse_usize_list};
use crate::margin::tabular_delta0;
use crate::mdp::{greedy_policy_table, value_iteration_default, MdpModel};
use crate::msbo::{msbo_fit, MsboConfig};
use crate::rng::{derive_seed, EVAL_SALT, MSBO_SALT};
use crate::stats::{linear_fit, median, t_half_width};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Fqi,
    Msbo,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Fqi => "fqi",
            Estimator::Msbo => "msbo",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Benchmark,
    Tabular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlopeStatistic {
    Mean,
    Median,
}

/// Everything a sweep run needs; parseable from flat `key = value` text.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub target: Target,
    pub estimator: Estimator,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global thread pool.
    pub parallelism: usize,
    /// Real wall times in the CSV; off by default so reruns are
    /// byte-identical.
    pub record_timing: bool,
    pub ci_level: f64,
    pub slope_statistic: SlopeStatistic,

    pub benchmark_seed: u64,
    pub gamma: f64,

    pub tabular_seed: u64,
    pub tabular_states: usize,
    pub tabular_actions: usize,
    pub tabular_reward_bound: f64,
    pub tabular_concentration: f64,

    pub eval_initial_states: usize,
    pub eval_horizon: usize,

    pub reference_n: usize,
    pub reference_iterations: usize,

    pub fqi_iterations: usize,
    pub fqi_ball_radius: f64,
    pub fqi_regression: Option<Regression>,

    pub msbo_zeta: f64,
    pub msbo_weight_bound: Option<f64>,
    pub msbo_witness_bound: Option<f64>,
    pub msbo_outer_steps: usize,
    pub msbo_restarts: usize,
    pub msbo_tolerance: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            target: Target::Benchmark,
            estimator: Estimator::Fqi,
            n_grid: vec![64, 90, 128, 256, 512],
            replications: 70,
            master_seed: 0,
            parallelism: 0,
            record_timing: false,
            ci_level: 0.75,
            slope_statistic: SlopeStatistic::Mean,
            benchmark_seed: 0,
            gamma: 0.9,
            tabular_seed: 0,
            tabular_states: 5,
            tabular_actions: 2,
            tabular_reward_bound: 1.0,
            tabular_concentration: 1.0,
            eval_initial_states: 40_000,
            eval_horizon: 50,
            reference_n: 40_000,
            reference_iterations: 100,
            fqi_iterations: 50,
            fqi_ball_radius: 1e6,
            fqi_regression: None,
            msbo_zeta: 0.5,
            msbo_weight_bound: None,
            msbo_witness_bound: None,
            msbo_outer_steps: 400,
            msbo_restarts: 5,
            msbo_tolerance: 1e-9,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly increasing".into()));
        }
        if self.replications < 2 {
            return Err(Error::Config("replications must be at least 2".into()));
        }
        if !(0.0 < self.ci_level && self.ci_level < 1.0) {
            return Err(Error::Config("ci_level must be in (0,1)".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must be in [0,1)".into()));
        }
        Ok(())
    }

    /// The section-4-faithful zero fallback for tabular targets; minimum-norm
    /// least squares for the benchmark, whose simplex features make the
    /// design matrix structurally rank-deficient.
    fn regression(&self) -> Regression {
        self.fqi_regression.unwrap_or(match self.target {
            Target::Benchmark => Regression::MinimumNorm,
            Target::Tabular => Regression::ZeroOnSingular,
        })
    }

    pub fn parse(text: &str) -> Result<SweepConfig> {
        let mut config = SweepConfig::default();
        for (key, value) in parse_kv(text)? {
            config.apply(&key, &value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "target" => {
                self.target = match value {
                    "benchmark" => Target::Benchmark,
                    "tabular" => Target::Tabular,
                    other => return Err(Error::Config(format!("unknown target `{other}`"))),
                }
            }
            "estimator" => {
                self.estimator = match value {
                    "fqi" => Estimator::Fqi,
                    "msbo" => Estimator::Msbo,
                    other => return Err(Error::Config(format!("unknown estimator `{other}`"))),
                }
            }
            "n_grid" => self.n_grid = parse_usize_list(key, value)?,
            "replications" => self.replications = parse_num(key, value)?,
            "master_seed" => self.master_seed = parse_num(key, value)?,
            "parallelism" => self.parallelism = parse_num(key, value)?,
            "record_timing" => self.record_timing = parse_bool(key, value)?,
            "ci_level" => self.ci_level = parse_num(key, value)?,
            "slope_statistic" => {
                self.slope_statistic = match value {
                    "mean" => SlopeStatistic::Mean,
                    "median" => SlopeStatistic::Median,
                    other => return Err(Error::Config(format!("unknown statistic `{other}`"))),
                }
            }
            "benchmark_seed" => self.benchmark_seed = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "tabular_seed" => self.tabular_seed = parse_num(key, value)?,
            "tabular_states" => self.tabular_states = parse_num(key, value)?,
            "tabular_actions" => self.tabular_actions = parse_num(key, value)?,
            "tabular_reward_bound" => self.tabular_reward_bound = parse_num(key, value)?,
            "tabular_concentration" => self.tabular_concentration = parse_num(key, value)?,
            "eval_initial_states" => self.eval_initial_states = parse_num(key, value)?,
            "eval_horizon" => self.eval_horizon = parse_num(key, value)?,
            "reference_n" => self.reference_n = parse_num(key, value)?,
            "reference_iterations" => self.reference_iterations = parse_num(key, value)?,
            "fqi_iterations" => self.fqi_iterations = parse_num(key, value)?,
            "fqi_ball_radius" => self.fqi_ball_radius = parse_num(key, value)?,
            "fqi_regression" => {
                self.fqi_regression = Some(match value {
                    "minnorm" => Regression::MinimumNorm,
                    "zero" => Regression::ZeroOnSingular,
                    other => return Err(Error::Config(format!("unknown regression `{other}`"))),
                })
            }
            "msbo_zeta" => self.msbo_zeta = parse_num(key, value)?,
            "msbo_weight_bound" => self.msbo_weight_bound = Some(parse_num(key, value)?),
            "msbo_witness_bound" => self.msbo_witness_bound = Some(parse_num(key, value)?),
            "msbo_outer_steps" => self.msbo_outer_steps = parse_num(key, value)?,
            "msbo_restarts" => self.msbo_restarts = parse_num(key, value)?,
            "msbo_tolerance" => self.msbo_tolerance = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NStats {
    pub n: usize,
    pub replications: usize,
    pub mean: f64,
    pub median: f64,
    pub std_error: f64,
    pub ci: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct SlopeSummary {
    pub slope: f64,
    pub ci: (f64, f64),
    pub intercept: f64,
    pub level: f64,
    pub dropped: usize,
}

#[derive(Clone, Debug)]
pub struct RegretCurve {
    pub per_n: Vec<NStats>,
    pub slope: Option<SlopeSummary>,
    pub degenerate_reason: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub curve: RegretCurve,
    pub csv: String,
    pub warnings: Vec<String>,
    pub failed_replications: usize,
}

pub const CSV_HEADER: &str =
    "n,replication,seed,estimator,K_or_steps,regret,v_star_hat,v_pi_hat,std_error,wall_time_ms";

struct Row {
    n: usize,
    replication: usize,
    seed: u64,
    estimator: &'static str,
    k_or_steps: usize,
    regret: f64,
    v_star_hat: f64,
    v_pi_hat: f64,
    std_error: f64,
    wall_time_ms: u64,
}

impl Row {
    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.replication,
            self.seed,
            self.estimator,
            self.k_or_steps,
            self.regret,
            self.v_star_hat,
            self.v_pi_hat,
            self.std_error,
            self.wall_time_ms
        )
    }
}

struct SweepWorld {
    mdp: MdpModel,
    behavior: Box<dyn BehaviorSampler>,
    features: Arc<dyn FeatureMap>,
}

fn build_world(config: &SweepConfig) -> Result<SweepWorld> {
    match config.target {
        Target::Benchmark => {
            let mdp = build_benchmark(&BenchmarkSpec {
                seed: config.benchmark_seed,
                gamma: config.gamma,
            });
            let features = mdp.features();
            Ok(SweepWorld {
                mdp: MdpModel::Linear(mdp),
                behavior: Box::new(BenchmarkBehavior),
                features,
            })
        }
        Target::Tabular => {
            let mdp = random_tabular_with_gamma(
                config.tabular_seed,
                config.tabular_states,
                config.tabular_actions,
                config.tabular_reward_bound,
                config.tabular_concentration,
                config.gamma,
            )?;
            let features: Arc<dyn FeatureMap> = Arc::new(OneHotFeatures {
                num_states: config.tabular_states,
                num_actions: config.tabular_actions,
            });
            Ok(SweepWorld {
                mdp: MdpModel::Tabular(mdp),
                behavior: Box::new(TabularUniformBehavior {
                    num_states: config.tabular_states,
                    num_actions: config.tabular_actions,
                }),
                features,
            })
        }
    }
}

fn msbo_config_for(config: &SweepConfig, world: &SweepWorld, seed: u64) -> MsboConfig {
    let d = world.features.dim();
    let default_bound =
        (d as f64).sqrt() * world.mdp.reward_bound() / (1.0 - world.mdp.discount());
    let mut msbo = MsboConfig::new(
        config.msbo_zeta,
        config.msbo_weight_bound.unwrap_or(default_bound),
        config.msbo_witness_bound.unwrap_or(default_bound),
        world.mdp.discount(),
    );
    msbo.outer_steps = config.msbo_outer_steps;
    msbo.restarts = config.msbo_restarts;
    msbo.tolerance = config.msbo_tolerance;
    msbo.seed = seed;
    msbo
}

fn run_one(
    config: &SweepConfig,
    world: &SweepWorld,
    reference: &GreedyPolicy,
    n: usize,
    replication: usize,
    seed: u64,
) -> Result<Row> {
    let started = Instant::now();
    let dataset = draw_dataset(&world.mdp, world.behavior.as_ref(), n, seed)?;
    let (policy, k_or_steps) = match config.estimator {
        Estimator::Fqi => {
            let fqi_config =
                FqiConfig::new(config.fqi_iterations, config.fqi_ball_radius, config.gamma)
                    .with_regression(config.regression());
            let q = fqi_fit(&dataset, Arc::clone(&world.features), &fqi_config)?;
            (GreedyPolicy::new(Arc::new(q)), config.fqi_iterations)
        }
        Estimator::Msbo => {
            let msbo = msbo_config_for(config, world, derive_seed(seed, MSBO_SALT, 2));
            let solution = msbo_fit(&dataset, Arc::clone(&world.features), &msbo)?;
            let q = crate::fqi::LinearQFunction::new(
                solution.q_weights.clone(),
                Arc::clone(&world.features),
                msbo.weight_bound,
            );
            (GreedyPolicy::new(Arc::new(q)), solution.iterations_used)
        }
    };
    let eval = EvalConfig {
        num_initial_states: config.eval_initial_states,
        horizon: config.eval_horizon,
        seed: derive_seed(seed, EVAL_SALT, 1),
    };
    let estimate = estimate_regret(&world.mdp, &policy, reference, &eval)?;
    let wall_time_ms = if config.record_timing {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    Ok(Row {
        n,
        replication,
        seed,
        estimator: config.estimator.name(),
        k_or_steps,
        regret: estimate.regret,
        v_star_hat: estimate.v_star_hat,
        v_pi_hat: estimate.v_pi_hat,
        std_error: estimate.std_error,
        wall_time_ms,
    })
}

/// Runs the full (n, replication) grid: derives per-replication seeds from
/// the master seed, fits the estimator, estimates regret against the cached
/// reference policy, and aggregates per-n statistics plus the log-log slope
/// fit. Fully deterministic given the config (with timing recording off).
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutput> {
    config.validate()?;
    if config.parallelism > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        pool.install(|| run_sweep_inner(config))
    } else {
        run_sweep_inner(config)
    }
}

fn run_sweep_inner(config: &SweepConfig) -> Result<SweepOutput> {
    let world = build_world(config)?;
    let reference = reference_optimal(
        &world.mdp,
        world.behavior.as_ref(),
        &ReferenceConfig {
            n: config.reference_n,
            iterations: config.reference_iterations,
            ball_radius: config.fqi_ball_radius,
            regression: config.regression(),
            seed: config.master_seed,
        },
    )?;

    let mut jobs = Vec::new();
    let mut seen = HashSet::new();
    for &n in &config.n_grid {
        for replication in 0..config.replications {
            let seed = derive_seed(config.master_seed, n as u64, replication as u64);
            if !seen.insert(seed) {
                return Err(Error::Internal(format!(
                    "replication seed collision at n={n}, replication={replication}"
                )));
            }
            jobs.push((n, replication, seed));
        }
    }

    let results: Vec<std::result::Result<Row, String>> = jobs
        .par_iter()
        .map(|&(n, replication, seed)| {
            run_one(config, &world, &reference, n, replication, seed)
                .map_err(|e| format!("n={n} replication={replication} seed={seed}: {e}"))
        })
        .collect();

    let total = results.len();
    let mut rows = Vec::with_capacity(total);
    let mut warnings = Vec::new();
    for result in results {
        match result {
            Ok(row) => rows.push(row),
            Err(message) => warnings.push(format!("replication failed: {message}")),
        }
    }
    let failed = total - rows.len();
    if failed * 10 > total {
        return Err(Error::Sweep(format!("{failed} of {total} replications failed")));
    }

    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&row.to_csv());
        csv.push('\n');
    }

    let curve = build_curve(config, &rows, &mut warnings)?;
    Ok(SweepOutput { curve, csv, warnings, failed_replications: failed })
}

fn build_curve(
    config: &SweepConfig,
    rows: &[Row],
    warnings: &mut Vec<String>,
) -> Result<RegretCurve> {
    let mut per_n = Vec::new();
    for &n in &config.n_grid {
        let regrets: Vec<f64> =
            rows.iter().filter(|r| r.n == n).map(|r| r.regret).collect();
        if regrets.is_empty() {
            continue;
        }
        let (mean, std_error) = crate::linalg::mean_and_std_error(&regrets);
        let half = t_half_width(std_error, regrets.len().saturating_sub(1), config.ci_level)?;
        per_n.push(NStats {
            n,
            replications: regrets.len(),
            mean,
            median: median(&regrets),
            std_error,
            ci: (mean - half, mean + half),
        });
    }

    let points: Vec<(f64, f64)> = per_n
        .iter()
        .map(|s| {
            let stat = match config.slope_statistic {
                SlopeStatistic::Mean => s.mean,
                SlopeStatistic::Median => s.median,
            };
            (s.n as f64, stat)
        })
        .collect();
    match fit_slope(&points, config.ci_level) {
        Ok(fit) => {
            for w in &fit.warnings {
                warnings.push(w.clone());
            }
            Ok(RegretCurve {
                per_n,
                slope: Some(SlopeSummary {
                    slope: fit.slope,
                    ci: fit.ci,
                    intercept: fit.intercept,
                    level: config.ci_level,
                    dropped: fit.dropped,
                }),
                degenerate_reason: None,
            })
        }
        Err(e) => Ok(RegretCurve { per_n, slope: None, degenerate_reason: Some(e.to_string()) }),
    }
}

#[derive(Clone, Debug)]
pub struct SlopeFitResult {
    pub slope: f64,
    pub intercept: f64,
    pub ci: (f64, f64),
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Least squares on (log n, log statistic) with a t-based confidence
/// interval at `ci_level`. Nonpositive statistics are dropped with a
/// warning; fewer than 3 surviving points is an error.
pub fn fit_slope(points: &[(f64, f64)], ci_level: f64) -> Result<SlopeFitResult> {
    let mut warnings = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (n, stat) in points {
        if *stat > 0.0 {
            xs.push(n.ln());
            ys.push(stat.ln());
        } else {
            dropped += 1;
            warnings.push(format!("dropping nonpositive statistic {stat} at n={n}"));
        }
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!(
            "slope fit needs at least 3 positive points, have {}",
            xs.len()
        )));
    }
    let fit = linear_fit(&xs, &ys)?;
    let half = t_half_width(fit.slope_std_error, fit.df, ci_level)?;
    Ok(SlopeFitResult {
        slope: fit.slope,
        intercept: fit.intercept,
        ci: (fit.slope - half, fit.slope + half),
        dropped,
        warnings,
    })
}

/// Recomputes per-n statistics and the slope from a previously written sweep
/// CSV.
pub fn curve_from_csv(csv: &str, statistic: SlopeStatistic, ci_level: f64) -> Result<RegretCurve> {
    let mut lines = csv.lines();
    let header = lines.next().ok_or_else(|| Error::Data("empty csv".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Data(format!("unexpected csv header `{header}`")));
    }
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Data(format!("csv line {}: bad field count", lineno + 2)));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|e| Error::Data(format!("csv line {}: {e}", lineno + 2)))?;
        let regret: f64 = fields[5]
            .parse()
            .map_err(|e| Error::Data(format!("csv line {}: {e}", lineno + 2)))?;
        rows.push((n, regret));
    }
    let mut ns: Vec<usize> = rows.iter().map(|r| r.0).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut per_n = Vec::new();
    for n in ns {
        let regrets: Vec<f64> =
            rows.iter().filter(|r| r.0 == n).map(|r| r.1).collect();
        let (mean, std_error) = crate::linalg::mean_and_std_error(&regrets);
        let half = t_half_width(std_error, regrets.len().saturating_sub(1), ci_level)?;
        per_n.push(NStats {
            n,
            replications: regrets.len(),
            mean,
            median: median(&regrets),
            std_error,
            ci: (mean - half, mean + half),
        });
    }
    let points: Vec<(f64, f64)> = per_n
        .iter()
        .map(|s| {
            let stat = match statistic {
                SlopeStatistic::Mean => s.mean,
                SlopeStatistic::Median => s.median,
            };
            (s.n as f64, stat)
        })
        .collect();
    match fit_slope(&points, ci_level) {
        Ok(fit) => Ok(RegretCurve {
            per_n,
            slope: Some(SlopeSummary {
                slope: fit.slope,
                ci: fit.ci,
                intercept: fit.intercept,
                level: ci_level,
                dropped: fit.dropped,
            }),
            degenerate_reason: None,
        }),
        Err(e) => Ok(RegretCurve { per_n, slope: None, degenerate_reason: Some(e.to_string()) }),
    }
}

/// Per-n fraction of replications whose fitted greedy policy equals the
/// exact optimal policy at every state (regret exactly zero by exact
/// evaluation).
#[derive(Clone, Debug)]
pub struct RegimeReport {
    pub delta0: f64,
    pub per_n: Vec<RegimeRow>,
}

#[derive(Clone, Copy, Debug)]
pub struct RegimeRow {
    pub n: usize,
    pub replications: usize,
    pub zero_regret_fraction: f64,
}

impl RegimeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,replications,zero_regret_fraction\n");
        for row in &self.per_n {
            out.push_str(&format!(
                "{},{},{}\n",
                row.n, row.replications, row.zero_regret_fraction
            ));
        }
        out
    }
}

/// Exponential-regime experiment on a tabular instance: for each n, the
/// fraction of replications recovering the exact optimal policy. Errors when
/// the instance has no positive margin.
pub fn tabular_regime_report(config: &SweepConfig) -> Result<RegimeReport> {
    if config.target != Target::Tabular {
        return Err(Error::Config("tabular regime needs target = tabular".into()));
    }
    config.validate()?;
    let world = build_world(config)?;
    let tabular = world.mdp.as_tabular().expect("tabular target");
    let q_star = value_iteration_default(tabular)?;
    let delta0 = tabular_delta0(&q_star, 1e-9)
        .map_err(|e| Error::RegimeNotApplicable(format!("degenerate margin: {e}")))?;
    let pi_star = greedy_policy_table(&q_star);

    let mut per_n = Vec::new();
    for &n in &config.n_grid {
        let hits: usize = (0..config.replications)
            .into_par_iter()
            .map(|replication| {
                let seed = derive_seed(config.master_seed, n as u64, replication as u64);
                let dataset =
                    draw_dataset(&world.mdp, world.behavior.as_ref(), n, seed).expect("n >= 1");
                let fqi_config =
                    FqiConfig::new(config.fqi_iterations, config.fqi_ball_radius, config.gamma)
                        .with_regression(config.regression());
                match fqi_fit(&dataset, Arc::clone(&world.features), &fqi_config) {
                    Ok(q) => {
                        let table = GreedyPolicy::new(Arc::new(q)).table(tabular.num_states);
                        usize::from(table == pi_star)
                    }
                    Err(_) => 0,
                }
            })
            .sum();
        per_n.push(RegimeRow {
            n,
            replications: config.replications,
            zero_regret_fraction: hits as f64 / config.replications as f64,
        });
    }
    Ok(RegimeReport { delta0, per_n })
}

/// Margin-profile estimation on the benchmark, end to end: reference
/// Q-estimate, probe policy set, occupancy-sampled profile.
#[derive(Clone, Debug)]
pub struct MarginProfileRunConfig {
    pub benchmark_seed: u64,
    pub gamma: f64,
    pub reference_n: usize,
    pub reference_iterations: usize,
    pub ball_radius: f64,
    /// Number of random greedy probe policies added to the reference and
    /// uniform-random probes.
    pub probe_policies: usize,
    pub samples_per_policy: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_count: usize,
    pub seed: u64,
}

impl Default for MarginProfileRunConfig {
    fn default() -> Self {
        MarginProfileRunConfig {
            benchmark_seed: 0,
            gamma: 0.9,
            reference_n: 40_000,
            reference_iterations: 100,
            ball_radius: 1e6,
            probe_policies: 8,
            samples_per_policy: 100_000,
            delta_min: 1e-3,
            delta_max: 1.0,
            delta_count: 24,
            seed: 0,
        }
    }
}

impl MarginProfileRunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = MarginProfileRunConfig::default();
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "benchmark_seed" => config.benchmark_seed = parse_num(&key, &value)?,
                "gamma" => config.gamma = parse_num(&key, &value)?,
                "reference_n" => config.reference_n = parse_num(&key, &value)?,
                "reference_iterations" => config.reference_iterations = parse_num(&key, &value)?,
                "ball_radius" => config.ball_radius = parse_num(&key, &value)?,
                "probe_policies" => config.probe_policies = parse_num(&key, &value)?,
                "samples_per_policy" => config.samples_per_policy = parse_num(&key, &value)?,
                "delta_min" => config.delta_min = parse_num(&key, &value)?,
                "delta_max" => config.delta_max = parse_num(&key, &value)?,
                "delta_count" => config.delta_count = parse_num(&key, &value)?,
                "seed" => config.seed = parse_num(&key, &value)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(config)
    }
}

pub fn run_margin_profile(config: &MarginProfileRunConfig) -> Result<crate::margin::MarginProfile> {
    let mdp = build_benchmark(&BenchmarkSpec {
        seed: config.benchmark_seed,
        gamma: config.gamma,
    });
    let features = mdp.features();
    let model = MdpModel::Linear(mdp);
    let reference = reference_optimal(
        &model,
        &BenchmarkBehavior,
        &ReferenceConfig {
            n: config.reference_n,
            iterations: config.reference_iterations,
            ball_radius: config.ball_radius,
            regression: Regression::MinimumNorm,
            seed: config.seed,
        },
    )?;
    let q_ref = reference.q_arc();
    let probes = crate::margin::default_probe_policies(
        reference,
        features,
        1.0,
        config.probe_policies,
        derive_seed(config.seed, 0x50524f42, 3),
    );
    let grid = crate::margin::log_grid(config.delta_min, config.delta_max, config.delta_count);
    let profile_config = crate::margin::ProfileConfig {
        samples_per_policy: config.samples_per_policy,
        tie_tolerance: crate::margin::DEFAULT_TIE_TOLERANCE,
        seed: derive_seed(config.seed, 0x50524f46, 4),
    };
    crate::margin::estimate_profile(&model, q_ref.as_ref(), &probes, &grid, &profile_config)
}

impl RegretCurve {
    pub fn summary(&self) -> String {
        let mut out = String::from("n,replications,mean_regret,median_regret,std_error,ci_lo,ci_hi\n");
        for s in &self.per_n {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.n, s.replications, s.mean, s.median, s.std_error, s.ci.0, s.ci.1
            ));
        }
        match (&self.slope, &self.degenerate_reason) {
            (Some(slope), _) => {
                out.push_str(&format!(
                    "slope,{},ci_lo,{},ci_hi,{},level,{}\n",
                    slope.slope, slope.ci.0, slope.ci.1, slope.level
                ));
            }
            (None, Some(reason)) => {
                out.push_str(&format!("slope,degenerate,{reason}\n"));
            }
            (None, None) => {}
        }
        out
    }
}

//! Synthetic panels from the hierarchical normal model
//! `β_{p,r,j} = μ_j + α_p + γ_{c(p)} + ε_{p,r,j}` and Monte Carlo
//! experiments on top of them.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{weighted_bootstrap, BootstrapConfig};
use crate::error::{Error, Result};
use crate::estimator::{estimate_archetype, estimate_uniform};
use crate::model::{summarize, ClusterMap, PersonaSummary, VoteTensor};
use crate::rng::{derive_seed, stream};
use crate::variance::{pool_variances, pool_variances_with, PersonaShrinkage, PoolingConfig};
use crate::weights::{check_weight_regularity, precision_weights, WeightKind, WeightVector};

const TAG_GENERATE: u64 = 0x0047_454E;
const TAG_SIM: u64 = 0x0053_494D;
const TAG_BOOT: u64 = 0x424F_4F54;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationParams {
    pub mu: Vec<f64>,
    pub sigma_alpha2: f64,
    pub sigma_gamma2: f64,
    pub sigma2: f64,
    pub n_per_persona: Vec<usize>,
    pub clusters: ClusterMap,
    pub missing_rate: f64,
    /// Per-petal variance multipliers `c_j`; all ones when `None`.
    pub petal_scale: Option<Vec<f64>>,
    pub seed: u64,
}

impl SimulationParams {
    pub fn n_personas(&self) -> usize {
        self.n_per_persona.len()
    }

    pub fn n_petals(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.mu.is_empty() || self.mu.iter().any(|m| !m.is_finite()) {
            return bad("mu must be a nonempty finite vector".into());
        }
        if self.n_per_persona.is_empty() || self.n_per_persona.contains(&0) {
            return bad("every persona needs at least one round".into());
        }
        self.clusters.check_len(self.n_personas())?;
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        for (name, v) in [("sigma_alpha2", self.sigma_alpha2), ("sigma_gamma2", self.sigma_gamma2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if let Some(scale) = &self.petal_scale {
            if scale.len() != self.n_petals() || scale.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
                return bad("petal_scale must hold one positive value per petal".into());
            }
        }
        Ok(())
    }

    fn petal_scale(&self, j: usize) -> f64 {
        self.petal_scale.as_ref().map_or(1.0, |s| s[j])
    }

    /// `v_p = σ_α² + σ_γ² + σ²/n_p`.
    pub fn true_variances(&self) -> Vec<f64> {
        self.n_per_persona
            .iter()
            .map(|&n| self.sigma_alpha2 + self.sigma_gamma2 + self.sigma2 / n as f64)
            .collect()
    }

    /// Within-persona sampling variance of the persona mean, `σ²·c̄/n_p`:
    /// the quantity the raw per-persona estimate targets.
    pub fn within_variances(&self) -> Vec<f64> {
        let c_bar = (0..self.n_petals()).map(|j| self.petal_scale(j)).sum::<f64>() / self.n_petals() as f64;
        self.n_per_persona
            .iter()
            .map(|&n| self.sigma2 * c_bar / n as f64)
            .collect()
    }

    fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub true_v: Vec<f64>,
    /// Cells restored so that every petal keeps one observation.
    pub repaired_cells: Vec<(usize, usize, usize)>,
}

/// Draws one panel. With per-petal scales `c_j` the whole deviation
/// `α_p + γ_c + ε` is multiplied by `√c_j`, so `Var(β̄_{p,j}) = c_j · v_p`.
pub fn generate(params: &SimulationParams) -> Result<(VoteTensor, GroundTruth)> {
    params.validate()?;
    let mut rng = stream(derive_seed(params.seed, &[TAG_GENERATE]));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = params.n_personas();
    let n_petals = params.n_petals();

    let sa = params.sigma_alpha2.sqrt();
    let sg = params.sigma_gamma2.sqrt();
    let se = params.sigma2.sqrt();
    let gamma: Vec<f64> = (0..params.clusters.n_clusters())
        .map(|_| sg * std_normal.sample(&mut rng))
        .collect();
    let alpha: Vec<f64> = (0..n).map(|_| sa * std_normal.sample(&mut rng)).collect();
    let root_scale: Vec<f64> = (0..n_petals).map(|j| params.petal_scale(j).sqrt()).collect();

    let mut full = Vec::with_capacity(n);
    for p in 0..n {
        let shift = alpha[p] + gamma[params.clusters.cluster_of(p)];
        let rounds = params.n_per_persona[p];
        let mut flat = Vec::with_capacity(rounds * n_petals);
        for _ in 0..rounds {
            for (mu, c) in params.mu.iter().zip(&root_scale) {
                let eps = se * std_normal.sample(&mut rng);
                flat.push(mu + c * (shift + eps));
            }
        }
        full.push(flat);
    }

    let mut tensor = VoteTensor::from_flat(full.clone(), n_petals)?;
    let mut repaired_cells = Vec::new();
    if params.missing_rate > 0.0 {
        for p in 0..n {
            for r in 0..params.n_per_persona[p] {
                for j in 0..n_petals {
                    if rng.random::<f64>() < params.missing_rate {
                        tensor.clear(p, r, j);
                    }
                }
            }
        }
        let counts = tensor.petal_counts();
        let total_rounds: usize = params.n_per_persona.iter().sum();
        for (j, _) in counts.iter().enumerate().filter(|(_, &c)| c == 0) {
            let mut k = rng.random_range(0..total_rounds);
            let mut p = 0;
            while k >= params.n_per_persona[p] {
                k -= params.n_per_persona[p];
                p += 1;
            }
            tensor.set(p, k, j, full[p][k * n_petals + j]);
            repaired_cells.push((p, k, j));
        }
    }

    Ok((
        tensor,
        GroundTruth {
            mu: params.mu.clone(),
            alpha,
            gamma,
            true_v: params.true_variances(),
            repaired_cells,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PetalMse {
    pub per_petal: Vec<f64>,
    pub aggregate: f64,
}

impl PetalMse {
    fn from_sums(sums: &[f64], n_sims: usize) -> Self {
        let per_petal: Vec<f64> = sums.iter().map(|s| s / n_sims as f64).collect();
        let aggregate = per_petal.iter().sum::<f64>() / per_petal.len() as f64;
        Self {
            per_petal,
            aggregate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub n_sims: usize,
    pub mse_owb_ideal: PetalMse,
    pub mse_owb_feasible: PetalMse,
    pub mse_uniform: PetalMse,
    /// `1/Σ v_p⁻¹`, the variance factor of the ideal weights.
    pub analytic_gls_variance: f64,
    /// `(1/N²) Σ v_p`, the variance factor of equal weights.
    pub analytic_uniform_variance: f64,
    pub analytic_variance_ratio: f64,
    /// Aggregate `MSE(ideal) / MSE(uniform)`.
    pub empirical_variance_ratio: f64,
    pub ci_level: Option<f64>,
    pub empirical_coverage: Option<Vec<f64>>,
    /// False for single-persona panels, where intervals collapse to a point.
    pub coverage_applicable: bool,
}

struct SimOutcome {
    err_ideal: Vec<f64>,
    err_feasible: Vec<f64>,
    err_uniform: Vec<f64>,
    covered: Option<Vec<bool>>,
}

fn feasible_weights(summary: &PersonaSummary, clusters: &ClusterMap, pooling: &PoolingConfig) -> Result<WeightVector> {
    let pooled = pool_variances(summary, clusters, pooling)?;
    precision_weights(&pooled.v_eff, WeightKind::Feasible)
}

fn simulate_once(
    params: &SimulationParams,
    index: usize,
    pooling: &PoolingConfig,
    coverage: Option<(f64, usize)>,
) -> Result<SimOutcome> {
    let sim_seed = derive_seed(params.seed, &[TAG_SIM, index as u64]);
    let (tensor, truth) = generate(&params.with_seed(sim_seed))?;
    let summary = summarize(&tensor);
    let ideal_w = precision_weights(&truth.true_v, WeightKind::Ideal)?;
    let feasible_w = feasible_weights(&summary, &params.clusters, pooling)?;
    let ideal = estimate_archetype(&summary, &ideal_w)?;
    let feasible = estimate_archetype(&summary, &feasible_w)?;
    let uniform = estimate_uniform(&summary)?;
    let sq = |est: &[f64]| -> Vec<f64> {
        est.iter().zip(&truth.mu).map(|(a, b)| (a - b) * (a - b)).collect()
    };
    let covered = match coverage {
        Some((ci_level, replicates)) => {
            let cfg = BootstrapConfig {
                replicates,
                ci_level,
                seed: derive_seed(sim_seed, &[TAG_BOOT]),
            };
            let boot = weighted_bootstrap(&summary, &feasible_w, &cfg)?;
            Some(
                boot.ci
                    .iter()
                    .zip(&truth.mu)
                    .map(|((lo, hi), mu)| lo <= mu && mu <= hi)
                    .collect(),
            )
        }
        None => None,
    };
    Ok(SimOutcome {
        err_ideal: sq(&ideal.mu_hat),
        err_feasible: sq(&feasible.mu_hat),
        err_uniform: sq(&uniform.mu_hat),
        covered,
    })
}

fn run_experiment(
    params: &SimulationParams,
    n_sims: usize,
    pooling: &PoolingConfig,
    coverage: Option<(f64, usize)>,
) -> Result<MonteCarloReport> {
    params.validate()?;
    pooling.validate()?;
    if n_sims == 0 {
        return Err(Error::InvalidConfig("n_sims must be at least 1".into()));
    }
    let outcomes: Vec<SimOutcome> = (0..n_sims)
        .into_par_iter()
        .map(|s| simulate_once(params, s, pooling, coverage))
        .collect::<Result<_>>()?;

    let n_petals = params.n_petals();
    let mut sums = [vec![0.0; n_petals], vec![0.0; n_petals], vec![0.0; n_petals]];
    let mut hits = vec![0usize; n_petals];
    for o in &outcomes {
        for j in 0..n_petals {
            sums[0][j] += o.err_ideal[j];
            sums[1][j] += o.err_feasible[j];
            sums[2][j] += o.err_uniform[j];
            if let Some(c) = &o.covered {
                hits[j] += usize::from(c[j]);
            }
        }
    }
    let mse_owb_ideal = PetalMse::from_sums(&sums[0], n_sims);
    let mse_owb_feasible = PetalMse::from_sums(&sums[1], n_sims);
    let mse_uniform = PetalMse::from_sums(&sums[2], n_sims);

    let v = params.true_variances();
    let n = v.len() as f64;
    let analytic_gls_variance = 1.0 / v.iter().map(|x| 1.0 / x).sum::<f64>();
    let analytic_uniform_variance = v.iter().sum::<f64>() / (n * n);
    let empirical_variance_ratio = mse_owb_ideal.aggregate / mse_uniform.aggregate;

    Ok(MonteCarloReport {
        n_sims,
        mse_owb_ideal,
        mse_owb_feasible,
        mse_uniform,
        analytic_gls_variance,
        analytic_uniform_variance,
        analytic_variance_ratio: analytic_gls_variance / analytic_uniform_variance,
        empirical_variance_ratio,
        ci_level: coverage.map(|(l, _)| l),
        empirical_coverage: coverage.map(|_| hits.iter().map(|&h| h as f64 / n_sims as f64).collect()),
        coverage_applicable: coverage.is_none() || params.n_personas() > 1,
    })
}

/// MSE of ideal OWB, feasible OWB and equal weights against the true μ.
pub fn run_mse_experiment(
    params: &SimulationParams,
    n_sims: usize,
    pooling: &PoolingConfig,
) -> Result<MonteCarloReport> {
    run_experiment(params, n_sims, pooling, None)
}

/// As [`run_mse_experiment`], plus weighted-bootstrap percentile interval
/// coverage of each μ_j.
pub fn run_coverage_experiment(
    params: &SimulationParams,
    n_sims: usize,
    ci_level: f64,
    replicates: usize,
    pooling: &PoolingConfig,
) -> Result<MonteCarloReport> {
    BootstrapConfig {
        replicates,
        ci_level,
        seed: 0,
    }
    .validate()?;
    run_experiment(params, n_sims, pooling, Some((ci_level, replicates)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShrinkageReport {
    pub n_sims: usize,
    /// Persona-simulation pairs with an estimable raw variance.
    pub scored: usize,
    pub mse_pooled: f64,
    pub mse_raw: f64,
    pub ratio: f64,
}

/// Compares pooled and raw per-persona variance estimates against the
/// within-persona sampling variance `σ²·c̄/n_p` they both target.
pub fn run_shrinkage_experiment(
    params: &SimulationParams,
    n_sims: usize,
    pooling: &PoolingConfig,
    shrinkage: PersonaShrinkage,
) -> Result<ShrinkageReport> {
    params.validate()?;
    if n_sims == 0 {
        return Err(Error::InvalidConfig("n_sims must be at least 1".into()));
    }
    let target = params.within_variances();
    let per_sim: Vec<(f64, f64, usize)> = (0..n_sims)
        .into_par_iter()
        .map(|s| -> Result<(f64, f64, usize)> {
            let seed = derive_seed(params.seed, &[TAG_SIM, s as u64]);
            let (tensor, _) = generate(&params.with_seed(seed))?;
            let summary = summarize(&tensor);
            let pooled = pool_variances_with(&summary, &params.clusters, pooling, shrinkage)?;
            let mut acc = (0.0, 0.0, 0);
            for (p, raw) in summary.raw_trace_var.iter().enumerate() {
                if let Some(raw) = raw {
                    acc.0 += (pooled.v_eff[p] - target[p]).powi(2);
                    acc.1 += (raw.max(pooling.variance_floor) - target[p]).powi(2);
                    acc.2 += 1;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let (sp, sr, scored) = per_sim
        .iter()
        .fold((0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if scored == 0 {
        return Err(Error::InvalidConfig("no persona had an estimable variance".into()));
    }
    let mse_pooled = sp / scored as f64;
    let mse_raw = sr / scored as f64;
    Ok(ShrinkageReport {
        n_sims,
        scored,
        mse_pooled,
        mse_raw,
        ratio: mse_pooled / mse_raw,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityExperiment {
    pub n_sims: usize,
    pub delta: f64,
    /// `N · min_p ŵ_p` per simulation.
    pub values: Vec<f64>,
    pub pass_rate: f64,
}

/// Distribution of `N · min ŵ_p` under the pooled pipeline.
pub fn run_regularity_experiment(
    params: &SimulationParams,
    n_sims: usize,
    pooling: &PoolingConfig,
    delta: f64,
) -> Result<RegularityExperiment> {
    params.validate()?;
    let values: Vec<f64> = (0..n_sims)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let seed = derive_seed(params.seed, &[TAG_SIM, s as u64]);
            let (tensor, _) = generate(&params.with_seed(seed))?;
            let w = feasible_weights(&summarize(&tensor), &params.clusters, pooling)?;
            Ok(check_weight_regularity(&w, delta).value)
        })
        .collect::<Result<_>>()?;
    let passed = values.iter().filter(|&&v| v >= delta).count();
    Ok(RegularityExperiment {
        n_sims,
        delta,
        pass_rate: passed as f64 / n_sims.max(1) as f64,
        values,
    })
}

/// Mean over simulations of `max_p |ŵ_p − w*_p|`.
pub fn run_weight_convergence(
    params: &SimulationParams,
    n_sims: usize,
    pooling: &PoolingConfig,
) -> Result<f64> {
    params.validate()?;
    let ideal = precision_weights(&params.true_variances(), WeightKind::Ideal)?;
    let gaps: Vec<f64> = (0..n_sims)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let seed = derive_seed(params.seed, &[TAG_SIM, s as u64]);
            let (tensor, _) = generate(&params.with_seed(seed))?;
            let w = feasible_weights(&summarize(&tensor), &params.clusters, pooling)?;
            Ok(w.as_slice()
                .iter()
                .zip(ideal.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok(gaps.iter().sum::<f64>() / gaps.len().max(1) as f64)
}

/// Flat scenario description used by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mu: Vec<f64>,
    #[serde(default)]
    pub sigma_alpha2: f64,
    #[serde(default)]
    pub sigma_gamma2: f64,
    pub sigma2: f64,
    pub n_per_persona: Vec<usize>,
    #[serde(default = "one")]
    pub n_clusters: usize,
    #[serde(default)]
    pub missing_rate: f64,
    #[serde(default)]
    pub petal_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_sims")]
    pub n_sims: usize,
    #[serde(default = "default_bench_replicates")]
    pub replicates: usize,
    #[serde(default = "default_ci")]
    pub ci_level: f64,
}

fn one() -> usize {
    1
}
fn default_sims() -> usize {
    1000
}
fn default_bench_replicates() -> usize {
    1000
}
fn default_ci() -> f64 {
    0.9
}

impl Scenario {
    pub fn params(&self) -> Result<SimulationParams> {
        let params = SimulationParams {
            mu: self.mu.clone(),
            sigma_alpha2: self.sigma_alpha2,
            sigma_gamma2: self.sigma_gamma2,
            sigma2: self.sigma2,
            n_per_persona: self.n_per_persona.clone(),
            clusters: ClusterMap::round_robin(self.n_per_persona.len(), self.n_clusters)?,
            missing_rate: self.missing_rate,
            petal_scale: self.petal_scale.clone(),
            seed: self.seed,
        };
        params.validate()?;
        Ok(params)
    }
}

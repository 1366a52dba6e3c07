//! Weighted bootstrap over personas.
//!
//! Each replicate draws `N` persona indices i.i.d. with the weight vector as
//! probabilities and averages the drawn persona means per petal. The
//! replicate mean therefore has expectation `Σ_p w_p β̄_{p,j}`, the weighted
//! point estimate. Weights stay fixed across replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::AuditLog;
use crate::error::{Error, Result};
use crate::estimator::estimate_archetype;
use crate::model::PersonaSummary;
use crate::rng::stream;
use crate::sampling::ExplicitSampler;
use crate::weights::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 2000,
            ci_level: 0.90,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// `replicates × P`.
    pub replicate_mu: Vec<Vec<f64>>,
    pub ci: Vec<(f64, f64)>,
    pub se: Vec<f64>,
    /// Replicate-petal cells where no drawn persona observed the petal and
    /// the point estimate was used instead.
    pub fallback_cells: usize,
}

pub use crate::rng::derive_replicate_seed;

pub fn weighted_bootstrap(
    summary: &PersonaSummary,
    wv: &WeightVector,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult> {
    weighted_bootstrap_audited(summary, wv, cfg, &AuditLog::default())
}

pub fn weighted_bootstrap_audited(
    summary: &PersonaSummary,
    wv: &WeightVector,
    cfg: &BootstrapConfig,
    audit: &AuditLog,
) -> Result<BootstrapResult> {
    cfg.validate()?;
    let point = estimate_archetype(summary, wv)?;
    let sampler = ExplicitSampler::new(wv.as_slice(), audit)?;
    let n = summary.n_personas();
    let n_petals = summary.n_petals();

    let rows: Vec<(Vec<f64>, usize)> = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(derive_replicate_seed(cfg.seed, b as u64));
            let mut sums = vec![0.0; n_petals];
            let mut hits = vec![0usize; n_petals];
            for _ in 0..n {
                let i = sampler.draw(&mut rng);
                for (j, m) in summary.means[i].iter().enumerate() {
                    if let Some(m) = m {
                        sums[j] += m;
                        hits[j] += 1;
                    }
                }
            }
            let mut fallbacks = 0;
            let row = (0..n_petals)
                .map(|j| {
                    if hits[j] > 0 {
                        sums[j] / hits[j] as f64
                    } else {
                        fallbacks += 1;
                        point.mu_hat[j]
                    }
                })
                .collect();
            (row, fallbacks)
        })
        .collect();
    audit.record_draws((cfg.replicates * n) as u64);

    let fallback_cells = rows.iter().map(|(_, f)| f).sum();
    let replicate_mu: Vec<Vec<f64>> = rows.into_iter().map(|(r, _)| r).collect();

    let alpha = 1.0 - cfg.ci_level;
    let mut ci = Vec::with_capacity(n_petals);
    let mut se = Vec::with_capacity(n_petals);
    let mut column = Vec::with_capacity(cfg.replicates);
    for j in 0..n_petals {
        column.clear();
        column.extend(replicate_mu.iter().map(|row| row[j]));
        se.push(std_dev(&column));
        column.sort_by(f64::total_cmp);
        ci.push((quantile_sorted(&column, alpha / 2.0), quantile_sorted(&column, 1.0 - alpha / 2.0)));
    }

    Ok(BootstrapResult {
        replicate_mu,
        ci,
        se,
        fallback_cells,
    })
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

//! Persona → cluster → global shrinkage of the trace-variance proxy.
//!
//! Cluster pools are df-weighted means of the persona estimates, shrunk
//! toward the global pool with `λ_c = m₁ / (D_c + m₁)`. Each persona is then
//! shrunk toward its cluster with `λ_p = m₀ / (d_p + m₀)`. A persona with no
//! within-persona degrees of freedom takes the cluster value outright.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClusterMap, PersonaSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolingConfig {
    /// m₀, pseudo degrees of freedom of the cluster prior for each persona.
    pub prior_strength_persona: f64,
    /// m₁, pseudo degrees of freedom of the global prior for each cluster.
    pub prior_strength_cluster: f64,
    /// Lower bound applied to every effective variance.
    pub variance_floor: f64,
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            prior_strength_persona: 5.0,
            prior_strength_cluster: 5.0,
            variance_floor: 1e-12,
        }
    }
}

impl PoolingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("prior_strength_persona", self.prior_strength_persona)?;
        positive("prior_strength_cluster", self.prior_strength_cluster)?;
        positive("variance_floor", self.variance_floor)
    }
}

/// How the persona-level blend weight λ_p is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PersonaShrinkage {
    /// `λ_p = m₀ / (d_p + m₀)`.
    PseudoCount,
    /// Fixed λ for every persona with `d_p ≥ 1` (experiments and controls).
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledVariances {
    pub v_eff: Vec<f64>,
    pub lambda_persona: Vec<f64>,
    /// Unshrunk df-weighted cluster pools; `None` when a cluster has no df.
    pub v_cluster: Vec<Option<f64>>,
    /// Cluster pools after shrinkage toward the global pool.
    pub v_cluster_shrunk: Vec<f64>,
    pub lambda_cluster: Vec<f64>,
    pub v_global: f64,
    /// Set when no persona has any within-persona degrees of freedom; every
    /// `v_eff` then equals the floor and the resulting weights are equal.
    pub degenerate: bool,
}

pub fn pool_variances(
    summary: &PersonaSummary,
    clusters: &ClusterMap,
    cfg: &PoolingConfig,
) -> Result<PooledVariances> {
    pool_variances_with(summary, clusters, cfg, PersonaShrinkage::PseudoCount)
}

pub fn pool_variances_with(
    summary: &PersonaSummary,
    clusters: &ClusterMap,
    cfg: &PoolingConfig,
    shrinkage: PersonaShrinkage,
) -> Result<PooledVariances> {
    cfg.validate()?;
    let n = summary.n_personas();
    clusters.check_len(n)?;
    if let PersonaShrinkage::Fixed(l) = shrinkage {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::InvalidConfig(format!("fixed lambda {l} outside [0, 1]")));
        }
    }
    let n_clusters = clusters.n_clusters();

    let mut global_num = 0.0;
    let mut global_df = 0.0;
    let mut cluster_num = vec![0.0; n_clusters];
    let mut cluster_df = vec![0.0; n_clusters];
    for p in 0..n {
        if let Some(v) = summary.raw_trace_var[p] {
            let d = summary.df[p] as f64;
            let c = clusters.cluster_of(p);
            global_num += d * v;
            global_df += d;
            cluster_num[c] += d * v;
            cluster_df[c] += d;
        }
    }

    if global_df == 0.0 {
        let floor = cfg.variance_floor;
        return Ok(PooledVariances {
            v_eff: vec![floor; n],
            lambda_persona: vec![1.0; n],
            v_cluster: vec![None; n_clusters],
            v_cluster_shrunk: vec![floor; n_clusters],
            lambda_cluster: vec![1.0; n_clusters],
            v_global: floor,
            degenerate: true,
        });
    }

    let v_global = global_num / global_df;
    let m1 = cfg.prior_strength_cluster;
    let mut v_cluster = Vec::with_capacity(n_clusters);
    let mut v_cluster_shrunk = Vec::with_capacity(n_clusters);
    let mut lambda_cluster = Vec::with_capacity(n_clusters);
    for c in 0..n_clusters {
        if cluster_df[c] > 0.0 {
            let vc = cluster_num[c] / cluster_df[c];
            let lam = m1 / (cluster_df[c] + m1);
            v_cluster.push(Some(vc));
            v_cluster_shrunk.push(blend(vc, v_global, lam));
            lambda_cluster.push(lam);
        } else {
            v_cluster.push(None);
            v_cluster_shrunk.push(v_global);
            lambda_cluster.push(1.0);
        }
    }

    let m0 = cfg.prior_strength_persona;
    let mut v_eff = Vec::with_capacity(n);
    let mut lambda_persona = Vec::with_capacity(n);
    for p in 0..n {
        let target = v_cluster_shrunk[clusters.cluster_of(p)];
        let (v, lam) = match summary.raw_trace_var[p] {
            Some(raw) if summary.df[p] > 0 => {
                let lam = match shrinkage {
                    PersonaShrinkage::PseudoCount => m0 / (summary.df[p] as f64 + m0),
                    PersonaShrinkage::Fixed(l) => l,
                };
                (blend(raw, target, lam), lam)
            }
            _ => (target, 1.0),
        };
        v_eff.push(v.max(cfg.variance_floor));
        lambda_persona.push(lam);
    }

    Ok(PooledVariances {
        v_eff,
        lambda_persona,
        v_cluster,
        v_cluster_shrunk,
        lambda_cluster,
        v_global,
        degenerate: false,
    })
}

#[inline]
fn blend(own: f64, pool: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        own
    } else if lambda == 1.0 {
        pool
    } else {
        (1.0 - lambda) * own + lambda * pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(raw: Vec<Option<f64>>, df: Vec<usize>) -> PersonaSummary {
        let n = raw.len();
        PersonaSummary {
            means: vec![vec![Some(0.0)]; n],
            counts: vec![vec![1]; n],
            raw_trace_var: raw,
            df,
        }
    }

    #[test]
    fn two_persona_blend() {
        let s = summary(vec![Some(1.0), Some(3.0)], vec![10, 10]);
        let pv = pool_variances(&s, &ClusterMap::single(2), &PoolingConfig::default()).unwrap();
        assert!((pv.v_global - 2.0).abs() < 1e-15);
        assert!((pv.v_cluster_shrunk[0] - 2.0).abs() < 1e-15);
        assert!((pv.lambda_persona[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((pv.v_eff[0] - 4.0 / 3.0).abs() < 1e-14);
        assert!((pv.v_eff[1] - 8.0 / 3.0).abs() < 1e-14);
        assert!(!pv.degenerate);
    }

    #[test]
    fn no_local_information_takes_cluster_value() {
        // cluster 0: personas 0 (df 0) and 1; cluster 1: persona 2.
        // cluster-0 pool is 2.0 with D=20, global (2*20 + 4*20)/40 = 3.0,
        // shrunk cluster value = 20/25*2 + 5/25*3 = 2.2.
        let s = summary(vec![None, Some(2.0), Some(4.0)], vec![0, 20, 20]);
        let clusters = ClusterMap::new(vec![0, 0, 1]).unwrap();
        let pv = pool_variances(&s, &clusters, &PoolingConfig::default()).unwrap();
        assert_eq!(pv.lambda_persona[0], 1.0);
        assert!((pv.v_eff[0] - 2.2).abs() < 1e-14);
        assert_eq!(pv.v_eff[0], pv.v_cluster_shrunk[0]);
    }

    #[test]
    fn equal_estimates_are_fixed_points() {
        let s = summary(vec![Some(0.7); 4], vec![3, 8, 1, 12]);
        let clusters = ClusterMap::new(vec![0, 1, 0, 1]).unwrap();
        let pv = pool_variances(&s, &clusters, &PoolingConfig::default()).unwrap();
        for v in pv.v_eff {
            assert!((v - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_cluster_falls_back_to_global() {
        let s = summary(vec![Some(1.0), None], vec![4, 0]);
        let clusters = ClusterMap::new(vec![0, 1]).unwrap();
        let pv = pool_variances(&s, &clusters, &PoolingConfig::default()).unwrap();
        assert_eq!(pv.v_cluster[1], None);
        assert_eq!(pv.lambda_cluster[1], 1.0);
        assert_eq!(pv.v_eff[1], pv.v_global);
    }

    #[test]
    fn degenerate_panel_is_flagged_and_floored() {
        let s = summary(vec![None, None, None], vec![0, 0, 0]);
        let cfg = PoolingConfig::default();
        let pv = pool_variances(&s, &ClusterMap::single(3), &cfg).unwrap();
        assert!(pv.degenerate);
        assert!(pv.v_eff.iter().all(|&v| v == cfg.variance_floor));
    }

    #[test]
    fn zero_variance_is_floored() {
        let s = summary(vec![Some(0.0), Some(0.0)], vec![5, 5]);
        let cfg = PoolingConfig::default();
        let pv = pool_variances(&s, &ClusterMap::single(2), &cfg).unwrap();
        assert!(pv.v_eff.iter().all(|&v| v == cfg.variance_floor));
    }

    #[test]
    fn fixed_lambda_extremes() {
        let s = summary(vec![Some(1.0), Some(5.0)], vec![2, 2]);
        let c = ClusterMap::single(2);
        let cfg = PoolingConfig::default();
        let none = pool_variances_with(&s, &c, &cfg, PersonaShrinkage::Fixed(0.0)).unwrap();
        assert_eq!(none.v_eff, vec![1.0, 5.0]);
        let full = pool_variances_with(&s, &c, &cfg, PersonaShrinkage::Fixed(1.0)).unwrap();
        assert_eq!(full.v_eff[0], full.v_eff[1]);
        assert!(pool_variances_with(&s, &c, &cfg, PersonaShrinkage::Fixed(1.5)).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let s = summary(vec![Some(1.0)], vec![2]);
        let cfg = PoolingConfig {
            prior_strength_persona: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            pool_variances(&s, &ClusterMap::single(1), &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}

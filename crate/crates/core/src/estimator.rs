//! Per-petal archetype estimates as weighted averages of persona means.
//!
//! Weights are renormalized per petal over the personas that observed it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::PersonaSummary;
use crate::weights::{compensated_sum, WeightKind, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OwbFeasible,
    OwbIdeal,
    Uniform,
}

impl From<WeightKind> for Method {
    fn from(kind: WeightKind) -> Self {
        match kind {
            WeightKind::Feasible => Method::OwbFeasible,
            WeightKind::Ideal => Method::OwbIdeal,
            WeightKind::Uniform => Method::Uniform,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchetypeEstimate {
    pub mu_hat: Vec<f64>,
    pub weights_used: WeightVector,
    pub per_petal_personas: Vec<Vec<usize>>,
    pub ci: Option<Vec<(f64, f64)>>,
    pub method: Method,
}

/// `μ̂_j = Σ_{p∈S_j} w̃_p β̄_{p,j}` with `w̃` renormalized over `S_j`.
pub fn estimate_archetype(summary: &PersonaSummary, wv: &WeightVector) -> Result<ArchetypeEstimate> {
    let n = summary.n_personas();
    if wv.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {n} personas",
            wv.len()
        )));
    }
    let n_petals = summary.n_petals();
    let mut mu_hat = Vec::with_capacity(n_petals);
    let mut per_petal_personas = Vec::with_capacity(n_petals);
    for j in 0..n_petals {
        let contributors = summary.contributors(j);
        if contributors.is_empty() {
            return Err(Error::EmptyPetal { petal: j });
        }
        mu_hat.push(weighted_petal_mean(summary, wv.as_slice(), &contributors, j));
        per_petal_personas.push(contributors);
    }
    Ok(ArchetypeEstimate {
        mu_hat,
        weights_used: wv.clone(),
        per_petal_personas,
        ci: None,
        method: wv.kind().into(),
    })
}

pub(crate) fn weighted_petal_mean(
    summary: &PersonaSummary,
    w: &[f64],
    contributors: &[usize],
    petal: usize,
) -> f64 {
    let total = compensated_sum(contributors.iter().map(|&p| w[p]));
    let mu = compensated_sum(
        contributors
            .iter()
            .map(|&p| w[p] / total * summary.means[p][petal].expect("contributor has a mean")),
    );
    // keep the result inside the hull of contributing means despite rounding
    let (lo, hi) = contributors
        .iter()
        .map(|&p| summary.means[p][petal].unwrap())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), m| (l.min(m), h.max(m)));
    mu.clamp(lo, hi)
}

/// Equal-weight baseline over contributing personas.
pub fn estimate_uniform(summary: &PersonaSummary) -> Result<ArchetypeEstimate> {
    let wv = WeightVector::uniform(summary.n_personas())?;
    estimate_archetype(summary, &wv)
}

/// Prior variance τ² on μ_j for the conjugate-normal posterior mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorVariance {
    Flat,
    Finite(f64),
}

/// Posterior mean of μ_j given persona means with known variances and a
/// `N(0, τ²)` prior: `(Σ β̄_p/v_p) / (Σ 1/v_p + 1/τ²)`.
pub fn posterior_mean_oracle(means: &[f64], variances: &[f64], prior: PriorVariance) -> Result<f64> {
    if means.len() != variances.len() || means.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} means, {} variances",
            means.len(),
            variances.len()
        )));
    }
    if let Some(index) = variances.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonPositiveVariance {
            index,
            value: variances[index],
        });
    }
    let prior_precision = match prior {
        PriorVariance::Flat => 0.0,
        PriorVariance::Finite(t2) if t2 > 0.0 && !t2.is_nan() => t2.recip(),
        PriorVariance::Finite(t2) => {
            return Err(Error::NonPositiveVariance {
                index: variances.len(),
                value: t2,
            })
        }
    };
    let num: f64 = means.iter().zip(variances).map(|(m, v)| m / v).sum();
    let den: f64 = variances.iter().map(|v| 1.0 / v).sum::<f64>() + prior_precision;
    Ok(num / den)
}

//! Normalized inverse-variance weights.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// From known (simulator) variances.
    Ideal,
    /// From pooled effective variances.
    Feasible,
    /// Equal weights, materialized like any other vector.
    Uniform,
}

/// Strictly positive probability vector over personas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    w: Vec<f64>,
    kind: WeightKind,
    min_weight_ratio: f64,
}

impl WeightVector {
    /// Wraps an existing probability vector after validating it.
    pub fn from_probabilities(w: Vec<f64>, kind: WeightKind) -> Result<Self> {
        check_probabilities(&w, 1e-12)?;
        let min_weight_ratio = w.len() as f64 * w.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            w,
            kind,
            min_weight_ratio,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProbabilities("empty weight vector".into()));
        }
        Ok(Self {
            w: vec![1.0 / n as f64; n],
            kind: WeightKind::Uniform,
            min_weight_ratio: 1.0,
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    /// `N · min_p w_p`.
    pub fn min_weight_ratio(&self) -> f64 {
        self.min_weight_ratio
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.w[i]
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub(crate) fn check_probabilities(w: &[f64], tol: f64) -> Result<()> {
    if w.is_empty() {
        return Err(Error::InvalidProbabilities("empty probability vector".into()));
    }
    if let Some(i) = w.iter().position(|x| !x.is_finite() || *x <= 0.0) {
        return Err(Error::InvalidProbabilities(format!(
            "entry {i} is {} (must be finite and positive)",
            w[i]
        )));
    }
    let total = compensated_sum(w.iter().copied());
    if (total - 1.0).abs() > tol {
        return Err(Error::InvalidProbabilities(format!("sums to {total}, not 1")));
    }
    Ok(())
}

/// `w_p = (1/v_p) / Σ_q (1/v_q)`.
pub fn precision_weights(variances: &[f64], kind: WeightKind) -> Result<WeightVector> {
    if variances.is_empty() {
        return Err(Error::InvalidProbabilities("no variances given".into()));
    }
    if let Some(index) = variances.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonPositiveVariance {
            index,
            value: variances[index],
        });
    }
    let precision: Vec<f64> = variances.iter().map(|v| v.recip()).collect();
    let total = compensated_sum(precision.iter().copied());
    if !total.is_finite() {
        return Err(Error::Invariant(format!("precision sum overflowed: {total}")));
    }
    let mut w: Vec<f64> = precision.iter().map(|x| x / total).collect();
    let s = compensated_sum(w.iter().copied());
    w.iter_mut().for_each(|x| *x /= s);
    let min_weight_ratio = w.len() as f64 * w.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(WeightVector {
        w,
        kind,
        min_weight_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityReport {
    /// Observed `N · min_p w_p`.
    pub value: f64,
    pub delta: f64,
    pub passed: bool,
}

/// Advisory check of `N · min_p w_p ≥ delta`.
pub fn check_weight_regularity(wv: &WeightVector, delta: f64) -> RegularityReport {
    let value = wv.min_weight_ratio();
    RegularityReport {
        value,
        delta,
        passed: value >= delta,
    }
}

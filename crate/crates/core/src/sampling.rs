//! The only sampling primitive in the crate. It cannot be constructed
//! without a concrete probability vector, and every construction is
//! validated and recorded in the audit log.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::diagnostics::AuditLog;
use crate::error::{Error, Result};
use crate::weights::check_probabilities;

/// Tolerance on `Σ p = 1` checked before any draw.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct ExplicitSampler {
    table: WeightedAliasIndex<f64>,
    len: usize,
}

impl ExplicitSampler {
    pub fn new(probs: &[f64], audit: &AuditLog) -> Result<Self> {
        let checked = check_probabilities(probs, PROBABILITY_SUM_TOL);
        audit.record_sampler(checked.is_ok());
        checked?;
        let table = WeightedAliasIndex::new(probs.to_vec())
            .map_err(|e| Error::InvalidProbabilities(e.to_string()))?;
        Ok(Self {
            table,
            len: probs.len(),
        })
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

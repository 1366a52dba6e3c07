//! Runtime audit: explicit-probability sampling, NaN scans, weight regularity.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::VoteTensor;
use crate::weights::RegularityReport;

/// Append-only, thread-safe accumulator.
#[derive(Debug, Default)]
pub struct AuditLog {
    explicit_samplers: AtomicU64,
    rejected_samplers: AtomicU64,
    draws: AtomicU64,
    nan_scans: Mutex<Vec<NanScanEntry>>,
    weight_regularity: Mutex<Option<RegularityReport>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NanScanEntry {
    pub artifact: String,
    pub non_finite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSnapshot {
    /// Samplers built from a validated, explicit probability vector.
    pub explicit_samplers: u64,
    /// Samplers refused because their probability vector was invalid.
    pub rejected_samplers: u64,
    pub draws: u64,
    pub nan_scans: Vec<NanScanEntry>,
    pub weight_regularity: Option<RegularityReport>,
}

impl AuditLog {
    pub fn record_sampler(&self, explicit: bool) {
        let counter = if explicit {
            &self.explicit_samplers
        } else {
            &self.rejected_samplers
        };
        counter.fetch_add(1, Ordering::SeqCst);
    }

    pub fn record_draws(&self, n: u64) {
        self.draws.fetch_add(n, Ordering::SeqCst);
    }

    pub fn record_weight_regularity(&self, report: RegularityReport) {
        *self.weight_regularity.lock().unwrap() = Some(report);
    }

    /// Scans an artifact and records the result.
    pub fn scan<A: NanScan + ?Sized>(&self, artifact: &str, value: &A) -> usize {
        let non_finite = value.count_non_finite();
        self.nan_scans.lock().unwrap().push(NanScanEntry {
            artifact: artifact.to_string(),
            non_finite,
        });
        non_finite
    }

    pub fn snapshot(&self) -> AuditSnapshot {
        AuditSnapshot {
            explicit_samplers: self.explicit_samplers.load(Ordering::SeqCst),
            rejected_samplers: self.rejected_samplers.load(Ordering::SeqCst),
            draws: self.draws.load(Ordering::SeqCst),
            nan_scans: self.nan_scans.lock().unwrap().clone(),
            weight_regularity: *self.weight_regularity.lock().unwrap(),
        }
    }

    /// Fails if any sampler lacked a valid probability vector or any scanned
    /// artifact contained a non-finite value.
    pub fn verify(&self) -> Result<()> {
        let snap = self.snapshot();
        if snap.rejected_samplers > 0 {
            return Err(Error::Invariant(format!(
                "{} sampling call(s) without a valid explicit probability vector",
                snap.rejected_samplers
            )));
        }
        if let Some(bad) = snap.nan_scans.iter().find(|e| e.non_finite > 0) {
            return Err(Error::Invariant(format!(
                "artifact {:?} contains {} non-finite value(s)",
                bad.artifact, bad.non_finite
            )));
        }
        Ok(())
    }
}

/// Count of NaN / infinite entries. Tensors are scanned under their mask.
pub trait NanScan {
    fn count_non_finite(&self) -> usize;
}

impl NanScan for VoteTensor {
    fn count_non_finite(&self) -> usize {
        (0..self.n_personas())
            .map(|p| {
                self.persona_values(p)
                    .iter()
                    .zip(self.persona_mask(p))
                    .filter(|(v, m)| **m && !v.is_finite())
                    .count()
            })
            .sum()
    }
}

impl NanScan for [f64] {
    fn count_non_finite(&self) -> usize {
        self.iter().filter(|v| !v.is_finite()).count()
    }
}

impl NanScan for Vec<f64> {
    fn count_non_finite(&self) -> usize {
        self.as_slice().count_non_finite()
    }
}

impl NanScan for [Vec<f64>] {
    fn count_non_finite(&self) -> usize {
        self.iter().map(|row| row.count_non_finite()).sum()
    }
}

impl NanScan for Vec<Vec<f64>> {
    fn count_non_finite(&self) -> usize {
        self.as_slice().count_non_finite()
    }
}

impl NanScan for [(f64, f64)] {
    fn count_non_finite(&self) -> usize {
        self.iter()
            .map(|(a, b)| usize::from(!a.is_finite()) + usize::from(!b.is_finite()))
            .sum()
    }
}

pub fn scan_nan<A: NanScan + ?Sized>(artifact: &A) -> usize {
    artifact.count_non_finite()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_corrupted_matrix() {
        let m = vec![vec![1.0, f64::NAN], vec![f64::NAN, f64::NAN, 2.0]];
        assert_eq!(scan_nan(&m), 3);
        assert_eq!(scan_nan(&[1.0, f64::INFINITY][..]), 1);
    }

    #[test]
    fn masked_cells_are_not_counted() {
        let t = VoteTensor::from_rows(vec![vec![vec![1.0, f64::NAN], vec![f64::NAN, 4.0]]])
            .unwrap();
        assert_eq!(t.missing_cells(), 2);
        assert_eq!(scan_nan(&t), 0);
    }

    #[test]
    fn verify_flags_rejected_samplers_and_dirty_scans() {
        let log = AuditLog::default();
        log.record_sampler(true);
        assert!(log.verify().is_ok());
        log.scan("clean", &vec![1.0, 2.0]);
        assert!(log.verify().is_ok());
        log.scan("dirty", &vec![f64::NAN]);
        assert!(matches!(log.verify(), Err(Error::Invariant(_))));

        let log = AuditLog::default();
        log.record_sampler(false);
        assert!(log.verify().is_err());
    }

    #[test]
    fn concurrent_appends_are_all_kept() {
        let log = AuditLog::default();
        std::thread::scope(|s| {
            for t in 0..8 {
                let log = &log;
                s.spawn(move || {
                    for _ in 0..100 {
                        log.record_sampler(true);
                        log.scan(&format!("t{t}"), &vec![0.0]);
                    }
                });
            }
        });
        let snap = log.snapshot();
        assert_eq!(snap.explicit_samplers, 800);
        assert_eq!(snap.nan_scans.len(), 800);
    }
}

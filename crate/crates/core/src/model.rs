//! Vote panel data model: ragged persona × round × petal tensor with an
//! explicit missingness mask, cluster assignment, and per-persona summaries.

use serde::Serialize;

use crate::error::{Error, Result};

/// Ragged persona × round × petal array of votes.
///
/// Each persona stores its rounds row-major (`round * n_petals + petal`).
/// Missing cells hold NaN in `values` and `false` in `mask`; a cell is
/// observed exactly when its value is finite.
#[derive(Debug, Clone)]
pub struct VoteTensor {
    values: Vec<Vec<f64>>,
    mask: Vec<Vec<bool>>,
    n_petals: usize,
}

/// Bitwise equality of values (missing cells all hold the same NaN) and mask.
impl PartialEq for VoteTensor {
    fn eq(&self, other: &Self) -> bool {
        self.n_petals == other.n_petals
            && self.mask == other.mask
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl VoteTensor {
    /// Builds a tensor from `rows[persona][round][petal]`. Non-finite inputs
    /// (NaN, ±inf) become missing cells.
    pub fn from_rows(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n_petals = rows
            .first()
            .and_then(|r| r.first())
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidTensor("need at least one persona and one round".into()))?;
        let mut values = Vec::with_capacity(rows.len());
        for (p, persona) in rows.into_iter().enumerate() {
            if persona.is_empty() {
                return Err(Error::InvalidTensor(format!("persona {p} has no rounds")));
            }
            let mut flat = Vec::with_capacity(persona.len() * n_petals);
            for (r, round) in persona.into_iter().enumerate() {
                if round.len() != n_petals {
                    return Err(Error::InvalidTensor(format!(
                        "persona {p} round {r} has {} petals, expected {n_petals}",
                        round.len()
                    )));
                }
                flat.extend(round);
            }
            values.push(flat);
        }
        Self::from_flat(values, n_petals)
    }

    /// Builds a tensor from per-persona flattened `round * n_petals + petal`
    /// buffers.
    pub fn from_flat(mut values: Vec<Vec<f64>>, n_petals: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidTensor("need at least one persona".into()));
        }
        if n_petals == 0 {
            return Err(Error::InvalidTensor("need at least one petal".into()));
        }
        let mut mask = Vec::with_capacity(values.len());
        for (p, flat) in values.iter_mut().enumerate() {
            if flat.is_empty() || flat.len() % n_petals != 0 {
                return Err(Error::InvalidTensor(format!(
                    "persona {p} buffer of length {} is not a positive multiple of {n_petals}",
                    flat.len()
                )));
            }
            let m: Vec<bool> = flat.iter().map(|v| v.is_finite()).collect();
            for (v, &ok) in flat.iter_mut().zip(&m) {
                if !ok {
                    *v = f64::NAN;
                }
            }
            mask.push(m);
        }
        Ok(Self {
            values,
            mask,
            n_petals,
        })
    }

    pub fn n_personas(&self) -> usize {
        self.values.len()
    }

    pub fn n_petals(&self) -> usize {
        self.n_petals
    }

    pub fn n_rounds(&self, persona: usize) -> usize {
        self.values[persona].len() / self.n_petals
    }

    pub fn rounds_per_persona(&self) -> Vec<usize> {
        (0..self.n_personas()).map(|p| self.n_rounds(p)).collect()
    }

    pub fn total_cells(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// Observed value of a cell, `None` when missing.
    #[inline]
    pub fn get(&self, persona: usize, round: usize, petal: usize) -> Option<f64> {
        let i = round * self.n_petals + petal;
        if self.mask[persona][i] {
            Some(self.values[persona][i])
        } else {
            None
        }
    }

    #[inline]
    pub fn is_observed(&self, persona: usize, round: usize, petal: usize) -> bool {
        self.mask[persona][round * self.n_petals + petal]
    }

    /// Raw flattened values for one persona (NaN where missing).
    pub fn persona_values(&self, persona: usize) -> &[f64] {
        &self.values[persona]
    }

    pub fn persona_mask(&self, persona: usize) -> &[bool] {
        &self.mask[persona]
    }

    pub fn missing_cells(&self) -> usize {
        self.mask.iter().flatten().filter(|m| !**m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().flatten().all(|m| *m)
    }

    /// Number of finite observations per petal.
    pub fn petal_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_petals];
        for m in &self.mask {
            for (i, &ok) in m.iter().enumerate() {
                if ok {
                    counts[i % self.n_petals] += 1;
                }
            }
        }
        counts
    }

    /// Minimal-data check: every petal needs at least one finite value.
    pub fn check_min_data(&self) -> Result<()> {
        let counts = self.petal_counts();
        if counts.iter().all(|&c| c == 0) {
            return Err(Error::NoDataAnywhere);
        }
        match counts.iter().position(|&c| c == 0) {
            Some(petal) => Err(Error::EmptyPetal { petal }),
            None => Ok(()),
        }
    }

    pub(crate) fn set(&mut self, persona: usize, round: usize, petal: usize, value: f64) {
        debug_assert!(value.is_finite());
        let i = round * self.n_petals + petal;
        self.values[persona][i] = value;
        self.mask[persona][i] = true;
    }

    pub(crate) fn clear(&mut self, persona: usize, round: usize, petal: usize) {
        let i = round * self.n_petals + petal;
        self.values[persona][i] = f64::NAN;
        self.mask[persona][i] = false;
    }
}

/// Total map persona → cluster with contiguous identifiers `0..C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterMap {
    assignment: Vec<usize>,
    n_clusters: usize,
}

impl ClusterMap {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::InvalidClusters("empty assignment".into()));
        }
        let n_clusters = assignment.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; n_clusters];
        for &c in &assignment {
            seen[c] = true;
        }
        if let Some(gap) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidClusters(format!(
                "cluster ids must be contiguous, {gap} is unused"
            )));
        }
        Ok(Self {
            assignment,
            n_clusters,
        })
    }

    /// Every persona in cluster 0.
    pub fn single(n_personas: usize) -> Self {
        Self {
            assignment: vec![0; n_personas],
            n_clusters: 1,
        }
    }

    /// Each persona in its own cluster.
    pub fn singletons(n_personas: usize) -> Self {
        Self {
            assignment: (0..n_personas).collect(),
            n_clusters: n_personas,
        }
    }

    /// Round-robin assignment of `n_personas` into `n_clusters` groups.
    pub fn round_robin(n_personas: usize, n_clusters: usize) -> Result<Self> {
        if n_clusters == 0 || n_clusters > n_personas {
            return Err(Error::InvalidClusters(format!(
                "cannot spread {n_personas} personas over {n_clusters} clusters"
            )));
        }
        Self::new((0..n_personas).map(|p| p % n_clusters).collect())
    }

    #[inline]
    pub fn cluster_of(&self, persona: usize) -> usize {
        self.assignment[persona]
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_personas(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub(crate) fn check_len(&self, n_personas: usize) -> Result<()> {
        if self.assignment.len() != n_personas {
            return Err(Error::DimensionMismatch(format!(
                "cluster map covers {} personas, tensor has {n_personas}",
                self.assignment.len()
            )));
        }
        Ok(())
    }
}

/// Per-persona petal means, observation counts and the trace-variance proxy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersonaSummary {
    /// `means[p][j]`, `None` where persona `p` never observed petal `j`.
    pub means: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    /// Mean over estimable petals of `s²_{p,j} / n_{p,j}`; `None` when no
    /// petal has two or more observations.
    pub raw_trace_var: Vec<Option<f64>>,
    /// Pooled degrees of freedom `Σ_j max(n_{p,j} − 1, 0)`.
    pub df: Vec<usize>,
}

impl PersonaSummary {
    pub fn n_personas(&self) -> usize {
        self.means.len()
    }

    pub fn n_petals(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Personas with at least one observation on `petal`.
    pub fn contributors(&self, petal: usize) -> Vec<usize> {
        (0..self.n_personas())
            .filter(|&p| self.counts[p][petal] > 0)
            .collect()
    }
}

/// Computes petal means over observed rounds and the per-persona variance
/// proxy of the mean vector.
pub fn summarize(tensor: &VoteTensor) -> PersonaSummary {
    let n = tensor.n_personas();
    let n_petals = tensor.n_petals();
    let mut means = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut raw_trace_var = Vec::with_capacity(n);
    let mut df = Vec::with_capacity(n);

    for p in 0..n {
        let rounds = tensor.n_rounds(p);
        let mut row_means = vec![None; n_petals];
        let mut row_counts = vec![0usize; n_petals];
        let mut var_sum = 0.0;
        let mut estimable = 0usize;
        let mut d = 0usize;
        for j in 0..n_petals {
            let obs = (0..rounds).filter_map(|r| tensor.get(p, r, j));
            let (count, sum) = obs.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
            row_counts[j] = count;
            if count == 0 {
                continue;
            }
            let mean = sum / count as f64;
            row_means[j] = Some(mean);
            if count >= 2 {
                let ss: f64 = obs.map(|v| (v - mean) * (v - mean)).sum();
                let s2 = ss / (count - 1) as f64;
                var_sum += s2 / count as f64;
                estimable += 1;
                d += count - 1;
            }
        }
        means.push(row_means);
        counts.push(row_counts);
        raw_trace_var.push((estimable > 0).then(|| var_sum / estimable as f64));
        df.push(d);
    }

    PersonaSummary {
        means,
        counts,
        raw_trace_var,
        df,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAN: f64 = f64::NAN;

    #[test]
    fn two_round_persona() {
        let t = VoteTensor::from_rows(vec![vec![vec![1.0, 3.0], vec![3.0, 5.0]]]).unwrap();
        let s = summarize(&t);
        assert_eq!(s.means[0], vec![Some(2.0), Some(4.0)]);
        assert_eq!(s.counts[0], vec![2, 2]);
        assert_eq!(s.raw_trace_var[0], Some(1.0));
        assert_eq!(s.df[0], 2);
    }

    #[test]
    fn single_round_has_no_variance() {
        let t = VoteTensor::from_rows(vec![vec![vec![7.0, 7.0]]]).unwrap();
        let s = summarize(&t);
        assert_eq!(s.means[0], vec![Some(7.0), Some(7.0)]);
        assert_eq!(s.counts[0], vec![1, 1]);
        assert_eq!(s.raw_trace_var[0], None);
        assert_eq!(s.df[0], 0);
    }

    #[test]
    fn constant_votes_with_missing_petal() {
        let t = VoteTensor::from_rows(vec![vec![vec![5.0, NAN], vec![5.0, NAN]]]).unwrap();
        let s = summarize(&t);
        assert_eq!(s.means[0], vec![Some(5.0), None]);
        assert_eq!(s.counts[0], vec![2, 0]);
        assert_eq!(s.raw_trace_var[0], Some(0.0));
    }

    #[test]
    fn infinities_become_missing() {
        let t = VoteTensor::from_rows(vec![vec![vec![f64::INFINITY, 1.0]]]).unwrap();
        assert!(!t.is_observed(0, 0, 0));
        assert_eq!(t.get(0, 0, 1), Some(1.0));
        assert_eq!(t.missing_cells(), 1);
    }

    #[test]
    fn ragged_petals_rejected() {
        let err = VoteTensor::from_rows(vec![vec![vec![1.0, 2.0], vec![1.0]]]).unwrap_err();
        assert!(matches!(err, Error::InvalidTensor(_)));
        assert!(VoteTensor::from_rows(vec![vec![]]).is_err());
        assert!(VoteTensor::from_rows(vec![]).is_err());
    }

    #[test]
    fn cluster_ids_must_be_contiguous() {
        assert!(ClusterMap::new(vec![0, 2]).is_err());
        let c = ClusterMap::new(vec![1, 0, 1]).unwrap();
        assert_eq!(c.n_clusters(), 2);
        assert_eq!(c.cluster_of(2), 1);
    }

    #[test]
    fn min_data_check_names_first_empty_petal() {
        let t = VoteTensor::from_rows(vec![vec![vec![1.0, NAN, NAN]], vec![vec![2.0, 3.0, NAN]]])
            .unwrap();
        assert_eq!(t.petal_counts(), vec![2, 1, 0]);
        assert!(matches!(t.check_min_data(), Err(Error::EmptyPetal { petal: 2 })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn persona_rows() -> impl Strategy<Value = (usize, Vec<Vec<Vec<f64>>>)> {
            (1usize..5).prop_flat_map(|n_petals| {
                let cell = prop_oneof![4 => -100.0f64..100.0, 1 => Just(f64::NAN)];
                let round = prop::collection::vec(cell, n_petals);
                let persona = prop::collection::vec(round, 1..6);
                (Just(n_petals), prop::collection::vec(persona, 1..5))
            })
        }

        proptest! {
            #[test]
            fn round_order_does_not_matter((_, rows) in persona_rows(), rot in 0usize..5) {
                let a = summarize(&VoteTensor::from_rows(rows.clone()).unwrap());
                let rotated: Vec<_> = rows.into_iter().map(|mut r| { let k = rot % r.len(); r.rotate_left(k); r.reverse(); r }).collect();
                let b = summarize(&VoteTensor::from_rows(rotated).unwrap());
                prop_assert_eq!(&a.counts, &b.counts);
                prop_assert_eq!(&a.df, &b.df);
                for (ra, rb) in a.means.iter().zip(&b.means) {
                    for (x, y) in ra.iter().zip(rb) {
                        match (x, y) {
                            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs())),
                            (None, None) => {}
                            _ => prop_assert!(false, "definedness differs"),
                        }
                    }
                }
                for (x, y) in a.raw_trace_var.iter().zip(&b.raw_trace_var) {
                    match (x, y) {
                        (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs())),
                        (None, None) => {}
                        _ => prop_assert!(false, "definedness differs"),
                    }
                }
            }

            #[test]
            fn means_stay_in_observed_range((n_petals, rows) in persona_rows()) {
                let t = VoteTensor::from_rows(rows).unwrap();
                let s = summarize(&t);
                for p in 0..t.n_personas() {
                    let estimable = (0..n_petals).filter(|&j| s.counts[p][j] >= 2).count();
                    prop_assert_eq!(s.raw_trace_var[p].is_some(), estimable > 0);
                    prop_assert_eq!(s.raw_trace_var[p].is_some(), s.df[p] >= 1);
                    if let Some(v) = s.raw_trace_var[p] {
                        prop_assert!(v >= 0.0 && v.is_finite());
                    }
                    for j in 0..n_petals {
                        let obs: Vec<f64> = (0..t.n_rounds(p)).filter_map(|r| t.get(p, r, j)).collect();
                        prop_assert_eq!(s.counts[p][j], obs.len());
                        prop_assert_eq!(s.means[p][j].is_some(), !obs.is_empty());
                        if let Some(m) = s.means[p][j] {
                            let lo = obs.iter().cloned().fold(f64::INFINITY, f64::min);
                            let hi = obs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            prop_assert!(m.is_finite() && m >= lo - 1e-12 && m <= hi + 1e-12);
                        }
                    }
                }
            }
        }
    }
}

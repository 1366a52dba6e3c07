//! NaN-free completion of a vote tensor.
//!
//! A missing cell `(p, r, j)` is filled with one draw from the first
//! nonempty donor pool in the chain
//!
//! ```text
//! local → persona → cluster → petal_global → global_all → error
//! ```
//!
//! Pools only contain values observed in the input, each draw uses an
//! explicit probability vector, and imputed values never become donors.
//! As long as every petal has one finite observation the `petal_global`
//! layer is nonempty, so every cell gets a finite value.

use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::AuditLog;
use crate::error::{Error, Result};
use crate::model::{ClusterMap, VoteTensor};
use crate::rng::{derive_cell_seed, stream};
use crate::sampling::ExplicitSampler;
use crate::weights::{compensated_sum, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    /// Other personas, same round and petal.
    Local,
    /// Same persona and petal, other rounds.
    Persona,
    /// Personas of the same cluster, same petal, any round.
    Cluster,
    /// All personas, same petal, any round.
    PetalGlobal,
    /// Every finite value in the tensor.
    GlobalAll,
}

impl Layer {
    pub const CHAIN: [Layer; 5] = [
        Layer::Local,
        Layer::Persona,
        Layer::Cluster,
        Layer::PetalGlobal,
        Layer::GlobalAll,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Local => "local",
            Layer::Persona => "persona",
            Layer::Cluster => "cluster",
            Layer::PetalGlobal => "petal_global",
            Layer::GlobalAll => "global_all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DonorPool {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    pub layer: Layer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LayerHistogram {
    pub local: usize,
    pub persona: usize,
    pub cluster: usize,
    pub petal_global: usize,
    pub global_all: usize,
}

impl LayerHistogram {
    fn bump(&mut self, layer: Layer) {
        match layer {
            Layer::Local => self.local += 1,
            Layer::Persona => self.persona += 1,
            Layer::Cluster => self.cluster += 1,
            Layer::PetalGlobal => self.petal_global += 1,
            Layer::GlobalAll => self.global_all += 1,
        }
    }

    pub fn get(&self, layer: Layer) -> usize {
        match layer {
            Layer::Local => self.local,
            Layer::Persona => self.persona,
            Layer::Cluster => self.cluster,
            Layer::PetalGlobal => self.petal_global,
            Layer::GlobalAll => self.global_all,
        }
    }

    pub fn total(&self) -> usize {
        Layer::CHAIN.iter().map(|&l| self.get(l)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellFill {
    pub persona: usize,
    pub round: usize,
    pub petal: usize,
    pub layer: Layer,
    pub pool_size: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationReport {
    #[serde(skip)]
    pub completed: VoteTensor,
    pub filled_cells: usize,
    pub layer_histogram: LayerHistogram,
    pub seed: u64,
    /// One entry per filled cell, in persona/round/petal order.
    pub trace: Vec<CellFill>,
}

/// Donor pool for a missing cell: the first nonempty layer of the chain.
pub fn build_donor_pool(
    tensor: &VoteTensor,
    clusters: &ClusterMap,
    weights: &WeightVector,
    cell: (usize, usize, usize),
) -> Result<DonorPool> {
    check_inputs(tensor, clusters, weights)?;
    let (p, r, j) = cell;
    if p >= tensor.n_personas() || r >= tensor.n_rounds(p) || j >= tensor.n_petals() {
        return Err(Error::DimensionMismatch(format!(
            "cell ({p}, {r}, {j}) outside the tensor"
        )));
    }
    if tensor.is_observed(p, r, j) {
        return Err(Error::CellObserved {
            persona: p,
            round: r,
            petal: j,
        });
    }
    donor_pool(tensor, clusters, weights.as_slice(), p, r, j).ok_or(Error::NoDataAnywhere)
}

fn check_inputs(tensor: &VoteTensor, clusters: &ClusterMap, weights: &WeightVector) -> Result<()> {
    clusters.check_len(tensor.n_personas())?;
    if weights.len() != tensor.n_personas() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} personas",
            weights.len(),
            tensor.n_personas()
        )));
    }
    Ok(())
}

fn donor_pool(
    tensor: &VoteTensor,
    clusters: &ClusterMap,
    w: &[f64],
    p: usize,
    r: usize,
    j: usize,
) -> Option<DonorPool> {
    let n = tensor.n_personas();

    // local: one donor per other persona that has round r
    let (values, raw): (Vec<f64>, Vec<f64>) = (0..n)
        .filter(|&q| q != p && r < tensor.n_rounds(q))
        .filter_map(|q| tensor.get(q, r, j).map(|v| (v, w[q])))
        .unzip();
    if let Some(pool) = finish(values, raw, Layer::Local) {
        return Some(pool);
    }

    // persona history
    let values: Vec<f64> = (0..tensor.n_rounds(p))
        .filter(|&rr| rr != r)
        .filter_map(|rr| tensor.get(p, rr, j))
        .collect();
    let raw = vec![1.0; values.len()];
    if let Some(pool) = finish(values, raw, Layer::Persona) {
        return Some(pool);
    }

    let c = clusters.cluster_of(p);
    let cluster_members = (0..n).filter(|&q| clusters.cluster_of(q) == c);
    if let Some(pool) = per_persona_split(tensor, cluster_members, w, j, Layer::Cluster) {
        return Some(pool);
    }
    if let Some(pool) = per_persona_split(tensor, 0..n, w, j, Layer::PetalGlobal) {
        return Some(pool);
    }

    // global_all: any petal
    let mut values = Vec::new();
    let mut raw = Vec::new();
    for (q, &wq) in w.iter().enumerate() {
        let donated: Vec<f64> = (0..tensor.n_rounds(q))
            .flat_map(|rr| (0..tensor.n_petals()).filter_map(move |jj| tensor.get(q, rr, jj)))
            .collect();
        let share = wq / donated.len().max(1) as f64;
        raw.extend(std::iter::repeat_n(share, donated.len()));
        values.extend(donated);
    }
    finish(values, raw, Layer::GlobalAll)
}

/// Pool over `personas` on petal `j`, any round; each persona's weight is
/// split evenly across the rounds it donates.
fn per_persona_split(
    tensor: &VoteTensor,
    personas: impl Iterator<Item = usize>,
    w: &[f64],
    j: usize,
    layer: Layer,
) -> Option<DonorPool> {
    let mut values = Vec::new();
    let mut raw = Vec::new();
    for q in personas {
        let start = values.len();
        values.extend((0..tensor.n_rounds(q)).filter_map(|rr| tensor.get(q, rr, j)));
        let k = values.len() - start;
        if k > 0 {
            raw.extend(std::iter::repeat_n(w[q] / k as f64, k));
        }
    }
    finish(values, raw, layer)
}

fn finish(values: Vec<f64>, raw: Vec<f64>, layer: Layer) -> Option<DonorPool> {
    if values.is_empty() {
        return None;
    }
    let total = compensated_sum(raw.iter().copied());
    let probs = raw.iter().map(|x| x / total).collect();
    Some(DonorPool {
        values,
        probs,
        layer,
    })
}

pub fn impute(
    tensor: &VoteTensor,
    clusters: &ClusterMap,
    weights: &WeightVector,
    seed: u64,
) -> Result<ImputationReport> {
    impute_audited(tensor, clusters, weights, seed, &AuditLog::default())
}

pub fn impute_audited(
    tensor: &VoteTensor,
    clusters: &ClusterMap,
    weights: &WeightVector,
    seed: u64,
    audit: &AuditLog,
) -> Result<ImputationReport> {
    check_inputs(tensor, clusters, weights)?;
    let counts = tensor.petal_counts();
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::NoDataAnywhere);
    }
    tensor.check_min_data()?;

    let missing: Vec<(usize, usize, usize)> = (0..tensor.n_personas())
        .flat_map(|p| {
            (0..tensor.n_rounds(p)).flat_map(move |r| (0..tensor.n_petals()).map(move |j| (p, r, j)))
        })
        .filter(|&(p, r, j)| !tensor.is_observed(p, r, j))
        .collect();

    let w = weights.as_slice();
    let trace: Vec<CellFill> = missing
        .par_iter()
        .map(|&(p, r, j)| -> Result<CellFill> {
            let pool = donor_pool(tensor, clusters, w, p, r, j).ok_or(Error::NoDataAnywhere)?;
            let sampler = ExplicitSampler::new(&pool.probs, audit)?;
            let mut rng = stream(derive_cell_seed(seed, p, r, j));
            let value = pool.values[sampler.draw(&mut rng)];
            Ok(CellFill {
                persona: p,
                round: r,
                petal: j,
                layer: pool.layer,
                pool_size: pool.values.len(),
                value,
            })
        })
        .collect::<Result<_>>()?;
    audit.record_draws(trace.len() as u64);

    let mut completed = tensor.clone();
    let mut layer_histogram = LayerHistogram::default();
    for fill in &trace {
        completed.set(fill.persona, fill.round, fill.petal, fill.value);
        layer_histogram.bump(fill.layer);
    }
    if !completed.is_complete() || audit.scan("completed_tensor", &completed) > 0 {
        return Err(Error::Invariant("imputation left non-finite cells".into()));
    }

    Ok(ImputationReport {
        completed,
        filled_cells: trace.len(),
        layer_histogram,
        seed,
        trace,
    })
}

//! Precision-weighted archetype estimation for repeated-vote panels.
//!
//! The pipeline runs `summarize` → `pool_variances` → `precision_weights`
//! → `estimate_archetype`, with `weighted_bootstrap` for intervals and
//! `impute` for NaN-free completion of the vote tensor. Every resampling
//! step goes through [`sampling::ExplicitSampler`], which cannot be built
//! without a concrete probability vector.

pub mod bootstrap;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod imputer;
pub mod io;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod simulator;
pub mod variance;
pub mod weights;

pub use bootstrap::{weighted_bootstrap, BootstrapConfig, BootstrapResult};
pub use diagnostics::{scan_nan, AuditLog};
pub use error::{Error, Result};
pub use estimator::{
    estimate_archetype, estimate_uniform, posterior_mean_oracle, ArchetypeEstimate, Method,
    PriorVariance,
};
pub use imputer::{build_donor_pool, impute, DonorPool, ImputationReport, Layer};
pub use model::{summarize, ClusterMap, PersonaSummary, VoteTensor};
pub use simulator::{generate, GroundTruth, MonteCarloReport, SimulationParams};
pub use variance::{pool_variances, PooledVariances, PoolingConfig};
pub use weights::{check_weight_regularity, precision_weights, WeightKind, WeightVector};

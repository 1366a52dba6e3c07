//! C interface to `owb-core`.
//!
//! Panels are opaque handles created by [`owb_panel_new`] or
//! [`owb_panel_from_csv`] and released with [`owb_panel_free`]. Every
//! fallible call returns an [`OwbStatus`]; on failure a human-readable
//! message is available from [`owb_last_error_message`] on the same thread.
//! Output buffers are caller-allocated and sized as documented per function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use owb_core::bootstrap::{weighted_bootstrap, BootstrapConfig};
use owb_core::estimator::estimate_archetype;
use owb_core::imputer::impute;
use owb_core::model::{summarize, ClusterMap, VoteTensor};
use owb_core::variance::{pool_variances, PoolingConfig};
use owb_core::weights::{precision_weights, WeightKind, WeightVector};
use owb_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OwbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    EmptyPetal = 3,
    NoDataAnywhere = 4,
    NonPositiveVariance = 5,
    Io = 6,
    Parse = 7,
    Internal = 8,
    Panic = 9,
}

/// Hierarchical pooling hyperparameters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OwbPoolingConfig {
    pub prior_strength_persona: f64,
    pub prior_strength_cluster: f64,
    pub variance_floor: f64,
}

impl From<OwbPoolingConfig> for PoolingConfig {
    fn from(c: OwbPoolingConfig) -> Self {
        PoolingConfig {
            prior_strength_persona: c.prior_strength_persona,
            prior_strength_cluster: c.prior_strength_cluster,
            variance_floor: c.variance_floor,
        }
    }
}

/// Opaque panel: a ragged vote tensor plus its cluster map.
pub struct OwbPanel {
    tensor: VoteTensor,
    clusters: ClusterMap,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> OwbStatus {
    match err {
        Error::EmptyPetal { .. } => OwbStatus::EmptyPetal,
        Error::NoDataAnywhere => OwbStatus::NoDataAnywhere,
        Error::NonPositiveVariance { .. } => OwbStatus::NonPositiveVariance,
        Error::Io(_) => OwbStatus::Io,
        Error::Parse { .. } | Error::DuplicateKey { .. } | Error::InconsistentCluster { .. } => OwbStatus::Parse,
        Error::Invariant(_) | Error::InvalidProbabilities(_) => OwbStatus::Internal,
        _ => OwbStatus::InvalidArgument,
    }
}

enum Failure {
    Status(OwbStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(OwbStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Status(OwbStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OwbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            OwbStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_last_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("panic: {msg}"));
            OwbStatus::Panic
        }
    }
}

unsafe fn panel_ref<'a>(panel: *const OwbPanel) -> Result<&'a OwbPanel, Failure> {
    panel.as_ref().ok_or_else(|| null("panel"))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn pooling(cfg: *const OwbPoolingConfig) -> Result<PoolingConfig, Failure> {
    let cfg: PoolingConfig = cfg.as_ref().map(|c| (*c).into()).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

fn feasible_weights(panel: &OwbPanel, cfg: &PoolingConfig) -> Result<WeightVector, Failure> {
    let summary = summarize(&panel.tensor);
    let pooled = pool_variances(&summary, &panel.clusters, cfg)?;
    Ok(precision_weights(&pooled.v_eff, WeightKind::Feasible)?)
}

/// Default pooling configuration (m₀ = m₁ = 5, floor 1e-12).
#[no_mangle]
pub extern "C" fn owb_pooling_config_default() -> OwbPoolingConfig {
    let d = PoolingConfig::default();
    OwbPoolingConfig {
        prior_strength_persona: d.prior_strength_persona,
        prior_strength_cluster: d.prior_strength_cluster,
        variance_floor: d.variance_floor,
    }
}

/// Builds a panel from a flat buffer.
///
/// `rounds[p]` is the number of rounds of persona `p`. `values` holds
/// `sum(rounds) * n_petals` entries ordered persona, round, petal; NaN or
/// infinite entries are missing. `clusters` holds one contiguous cluster id
/// per persona, or is null for a single cluster.
///
/// # Safety
/// Pointers must be valid for the lengths above; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn owb_panel_new(
    n_personas: usize,
    n_petals: usize,
    rounds: *const usize,
    values: *const f64,
    clusters: *const usize,
    out: *mut *mut OwbPanel,
) -> OwbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if rounds.is_null() {
            return Err(null("rounds"));
        }
        if values.is_null() {
            return Err(null("values"));
        }
        if n_personas == 0 || n_petals == 0 {
            return Err(invalid("need at least one persona and one petal"));
        }
        let rounds = std::slice::from_raw_parts(rounds, n_personas);
        let mut offset = 0usize;
        let mut rows = Vec::with_capacity(n_personas);
        for (p, &n_r) in rounds.iter().enumerate() {
            let len = n_r
                .checked_mul(n_petals)
                .ok_or_else(|| invalid(format!("persona {p}: size overflow")))?;
            rows.push(std::slice::from_raw_parts(values.add(offset), len).to_vec());
            offset += len;
        }
        let tensor = VoteTensor::from_flat(rows, n_petals)?;
        let clusters = if clusters.is_null() {
            ClusterMap::single(n_personas)
        } else {
            ClusterMap::new(std::slice::from_raw_parts(clusters, n_personas).to_vec())?
        };
        *out = Box::into_raw(Box::new(OwbPanel { tensor, clusters }));
        Ok(())
    })
}

/// Reads a long-format votes CSV
/// (`persona_id,cluster_id,round,petal_id,value`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn owb_panel_from_csv(path: *const c_char, out: *mut *mut OwbPanel) -> OwbStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| invalid("path is not valid UTF-8"))?;
        let panel = owb_core::io::ingest(path)?;
        *out = Box::into_raw(Box::new(OwbPanel {
            tensor: panel.tensor,
            clusters: panel.clusters,
        }));
        Ok(())
    })
}

/// # Safety
/// `panel` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn owb_panel_free(panel: *mut OwbPanel) {
    if !panel.is_null() {
        drop(Box::from_raw(panel));
    }
}

/// # Safety
/// `panel` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn owb_panel_n_personas(panel: *const OwbPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.tensor.n_personas())
}

/// # Safety
/// `panel` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn owb_panel_n_petals(panel: *const OwbPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.tensor.n_petals())
}

/// Number of cells, observed or not: `sum(rounds) * n_petals`.
///
/// # Safety
/// `panel` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn owb_panel_total_cells(panel: *const OwbPanel) -> usize {
    panel.as_ref().map_or(0, |p| p.tensor.total_cells())
}

/// Normalized inverse-variance weights.
///
/// # Safety
/// `variances` and `out_weights` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn owb_precision_weights(variances: *const f64, n: usize, out_weights: *mut f64) -> OwbStatus {
    guard(|| {
        if variances.is_null() {
            return Err(null("variances"));
        }
        let out = out_slice(out_weights, n, "out_weights")?;
        let v = std::slice::from_raw_parts(variances, n);
        let wv = precision_weights(v, WeightKind::Ideal)?;
        out.copy_from_slice(wv.as_slice());
        Ok(())
    })
}

/// Point estimate with pooled feasible weights.
///
/// `out_mu` holds `n_petals` doubles; `out_weights` holds `n_personas`
/// doubles or is null. A null `cfg` uses the defaults.
///
/// # Safety
/// Pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn owb_estimate(
    panel: *const OwbPanel,
    cfg: *const OwbPoolingConfig,
    out_mu: *mut f64,
    out_weights: *mut f64,
) -> OwbStatus {
    guard(|| {
        let panel = panel_ref(panel)?;
        let mu = out_slice(out_mu, panel.tensor.n_petals(), "out_mu")?;
        let cfg = pooling(cfg)?;
        panel.tensor.check_min_data()?;
        let wv = feasible_weights(panel, &cfg)?;
        let est = estimate_archetype(&summarize(&panel.tensor), &wv)?;
        mu.copy_from_slice(&est.mu_hat);
        if !out_weights.is_null() {
            std::slice::from_raw_parts_mut(out_weights, wv.len()).copy_from_slice(wv.as_slice());
        }
        Ok(())
    })
}

/// Point estimate plus weighted-bootstrap percentile interval.
///
/// `out_mu`, `out_lower` and `out_upper` hold `n_petals` doubles each.
///
/// # Safety
/// Pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn owb_bootstrap_ci(
    panel: *const OwbPanel,
    cfg: *const OwbPoolingConfig,
    replicates: usize,
    ci_level: f64,
    seed: u64,
    out_mu: *mut f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> OwbStatus {
    guard(|| {
        let panel = panel_ref(panel)?;
        let n_petals = panel.tensor.n_petals();
        let mu = out_slice(out_mu, n_petals, "out_mu")?;
        let lower = out_slice(out_lower, n_petals, "out_lower")?;
        let upper = out_slice(out_upper, n_petals, "out_upper")?;
        let cfg = pooling(cfg)?;
        panel.tensor.check_min_data()?;
        let wv = feasible_weights(panel, &cfg)?;
        let summary = summarize(&panel.tensor);
        let est = estimate_archetype(&summary, &wv)?;
        let boot = weighted_bootstrap(
            &summary,
            &wv,
            &BootstrapConfig {
                replicates,
                ci_level,
                seed,
            },
        )?;
        mu.copy_from_slice(&est.mu_hat);
        for (j, &(lo, hi)) in boot.ci.iter().enumerate() {
            lower[j] = lo;
            upper[j] = hi;
        }
        Ok(())
    })
}

/// Fills every missing cell, using default pooling for the donor weights.
///
/// `out_values` holds `owb_panel_total_cells` doubles in persona, round,
/// petal order; `out_filled`, if not null, receives the number of filled cells.
///
/// # Safety
/// Pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn owb_impute(
    panel: *const OwbPanel,
    seed: u64,
    out_values: *mut f64,
    out_filled: *mut usize,
) -> OwbStatus {
    guard(|| {
        let panel = panel_ref(panel)?;
        let out = out_slice(out_values, panel.tensor.total_cells(), "out_values")?;
        panel.tensor.check_min_data()?;
        let wv = feasible_weights(panel, &PoolingConfig::default())?;
        let rep = impute(&panel.tensor, &panel.clusters, &wv, seed)?;
        let mut k = 0;
        for p in 0..rep.completed.n_personas() {
            let row = rep.completed.persona_values(p);
            out[k..k + row.len()].copy_from_slice(row);
            k += row.len();
        }
        if !out_filled.is_null() {
            *out_filled = rep.filled_cells;
        }
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null after a
/// success. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn owb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn owb_status_str(status: OwbStatus) -> *const c_char {
    let s: &'static CStr = match status {
        OwbStatus::Ok => c"OK",
        OwbStatus::NullPointer => c"NULL_POINTER",
        OwbStatus::InvalidArgument => c"INVALID_ARGUMENT",
        OwbStatus::EmptyPetal => c"EMPTY_PETAL",
        OwbStatus::NoDataAnywhere => c"NO_DATA_ANYWHERE",
        OwbStatus::NonPositiveVariance => c"NON_POSITIVE_VARIANCE",
        OwbStatus::Io => c"IO",
        OwbStatus::Parse => c"PARSE",
        OwbStatus::Internal => c"INTERNAL",
        OwbStatus::Panic => c"PANIC",
    };
    s.as_ptr()
}

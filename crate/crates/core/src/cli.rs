//! `owb` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 minimal-data violation,
//! 3 internal invariant failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bootstrap::{weighted_bootstrap_audited, BootstrapResult};
use crate::diagnostics::{AuditLog, AuditSnapshot};
use crate::error::{Error, Result};
use crate::estimator::{estimate_archetype, ArchetypeEstimate};
use crate::imputer::{impute_audited, Layer};
use crate::io::{self, Panel, RunConfig};
use crate::model::summarize;
use crate::simulator::{
    generate, run_coverage_experiment, run_mse_experiment, run_regularity_experiment,
    run_shrinkage_experiment, MonteCarloReport, Scenario,
};
use crate::variance::{pool_variances, PersonaShrinkage, PooledVariances};
use crate::weights::{check_weight_regularity, precision_weights, RegularityReport, WeightKind, WeightVector};

#[derive(Debug, Parser)]
#[command(name = "owb", version, about = "Precision-weighted archetype estimation and NaN-free imputation for vote panels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that every petal has at least one finite observation.
    Validate {
        votes: PathBuf,
    },
    /// Estimate the archetype with pooled precision weights.
    Estimate {
        votes: PathBuf,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Estimate the archetype and add weighted-bootstrap percentile intervals.
    BootstrapCi {
        votes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Fill every missing cell through the hierarchical donor chain.
    Impute {
        votes: PathBuf,
        /// Completed votes CSV.
        #[arg(long)]
        out: PathBuf,
        /// Report JSON (filled cells, layer histogram, seed).
        #[arg(long)]
        report: Option<PathBuf>,
        /// Number of completed datasets, seeds `seed, seed+1, ...`.
        #[arg(long, default_value_t = 1)]
        multiple: u64,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Generate one panel from a scenario and run the MSE experiment.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run MSE, coverage, shrinkage and weight-regularity experiments.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunOpts {
    /// Flat key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long)]
    pub prior_strength_persona: Option<f64>,
    #[arg(long)]
    pub prior_strength_cluster: Option<f64>,
    #[arg(long)]
    pub variance_floor: Option<f64>,
    /// Skip the up-front minimal-data check.
    #[arg(long)]
    pub no_validate: bool,
    /// Threshold for the `N · min w` report (default `1/N`).
    #[arg(long)]
    pub regularity_delta: Option<f64>,
    /// Dump the audit log as JSON on stderr.
    #[arg(long, short)]
    pub verbose: bool,
}

impl RunOpts {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.bootstrap.seed = v;
        }
        if let Some(v) = self.replicates {
            cfg.bootstrap.replicates = v;
        }
        if let Some(v) = self.ci_level {
            cfg.bootstrap.ci_level = v;
        }
        if let Some(v) = self.prior_strength_persona {
            cfg.pooling.prior_strength_persona = v;
        }
        if let Some(v) = self.prior_strength_cluster {
            cfg.pooling.prior_strength_cluster = v;
        }
        if let Some(v) = self.variance_floor {
            cfg.pooling.variance_floor = v;
        }
        if self.no_validate {
            cfg.validate_min_data = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Validate { votes } => cmd_validate(votes),
        Command::Estimate { votes, out, opts } => cmd_estimate(votes, out.as_deref(), opts, false),
        Command::BootstrapCi { votes, out, opts } => cmd_estimate(votes, out.as_deref(), opts, true),
        Command::Impute {
            votes,
            out,
            report,
            multiple,
            opts,
        } => cmd_impute(votes, out, report.as_deref(), *multiple, opts),
        Command::Simulate {
            scenario,
            out_dir,
            opts,
        } => cmd_simulate(scenario, out_dir, opts),
        Command::Bench {
            scenario,
            out_dir,
            opts,
        } => cmd_bench(scenario, out_dir, opts),
    }
}

fn cmd_validate(votes: &Path) -> Result<i32> {
    let panel = io::ingest(votes)?;
    let counts = panel.tensor.petal_counts();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "petal_id,finite_count")?;
    for (j, c) in counts.iter().enumerate() {
        writeln!(stdout, "{},{c}", panel.ids.petals[j])?;
    }
    let empty: Vec<&str> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(j, _)| panel.ids.petals[j].as_str())
        .collect();
    if empty.is_empty() {
        Ok(0)
    } else {
        eprintln!(
            "error[EMPTY_PETAL]: petals without finite observations: {}",
            empty.join(", ")
        );
        Ok(2)
    }
}

fn check_min_data(panel: &Panel, cfg: &RunConfig) -> Result<Option<i32>> {
    if !cfg.validate_min_data {
        return Ok(None);
    }
    let empty: Vec<&str> = panel
        .tensor
        .petal_counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(j, _)| panel.ids.petals[j].as_str())
        .collect();
    if empty.is_empty() {
        Ok(None)
    } else {
        eprintln!(
            "error[EMPTY_PETAL]: petals without finite observations: {}",
            empty.join(", ")
        );
        Ok(Some(2))
    }
}

struct Fitted {
    pooled: PooledVariances,
    weights: WeightVector,
    estimate: ArchetypeEstimate,
    regularity: RegularityReport,
}

fn fit(panel: &Panel, cfg: &RunConfig, delta: Option<f64>, audit: &AuditLog) -> Result<Fitted> {
    let summary = summarize(&panel.tensor);
    let pooled = pool_variances(&summary, &panel.clusters, &cfg.pooling)?;
    if pooled.degenerate {
        eprintln!("warning[DEGENERATE_VARIANCE]: no persona has within-persona variation; using equal weights");
    }
    let weights = precision_weights(&pooled.v_eff, WeightKind::Feasible)?;
    let estimate = estimate_archetype(&summary, &weights)?;
    let n = weights.len() as f64;
    let regularity = check_weight_regularity(&weights, delta.unwrap_or(1.0 / n));
    audit.record_weight_regularity(regularity);
    Ok(Fitted {
        pooled,
        weights,
        estimate,
        regularity,
    })
}

#[derive(Serialize)]
struct Interval {
    lower: f64,
    upper: f64,
}

fn cmd_estimate(votes: &Path, out: Option<&Path>, opts: &RunOpts, with_ci: bool) -> Result<i32> {
    let cfg = opts.resolve()?;
    let panel = io::ingest(votes)?;
    if let Some(code) = check_min_data(&panel, &cfg)? {
        return Ok(code);
    }
    let audit = AuditLog::default();
    let fitted = fit(&panel, &cfg, opts.regularity_delta, &audit)?;
    let summary = summarize(&panel.tensor);

    audit.scan("mu_hat", &fitted.estimate.mu_hat);
    audit.scan("weights", &fitted.weights.as_slice().to_vec());
    audit.scan("v_eff", &fitted.pooled.v_eff);

    let mut boot: Option<BootstrapResult> = None;
    if with_ci {
        let b = weighted_bootstrap_audited(&summary, &fitted.weights, &cfg.bootstrap, &audit)?;
        audit.scan("replicates", &b.replicate_mu);
        audit.scan("ci", b.ci.as_slice());
        audit.scan("se", &b.se);
        boot = Some(b);
    }
    audit.verify()?;
    let snapshot = audit.snapshot();

    let mut doc = json!({
        "method": fitted.estimate.method,
        "petals": panel.ids.petals,
        "mu_hat": fitted.estimate.mu_hat,
        "contributors_per_petal": fitted.estimate.per_petal_personas.iter().map(Vec::len).collect::<Vec<_>>(),
        "personas": panel.ids.personas,
        "weights": fitted.weights.as_slice(),
        "weight_kind": fitted.weights.kind(),
        "lambda_persona": fitted.pooled.lambda_persona,
        "v_eff": fitted.pooled.v_eff,
        "raw_trace_var": summary.raw_trace_var,
        "df": summary.df,
        "clusters": panel.ids.clusters,
        "v_cluster": fitted.pooled.v_cluster,
        "v_cluster_shrunk": fitted.pooled.v_cluster_shrunk,
        "lambda_cluster": fitted.pooled.lambda_cluster,
        "v_global": fitted.pooled.v_global,
        "pooling": cfg.pooling,
        "diagnostics": {
            "degenerate_variance": fitted.pooled.degenerate,
            "weight_regularity": fitted.regularity,
            "audit": snapshot,
        },
    });
    if let Some(b) = &boot {
        let obj = doc.as_object_mut().expect("object");
        obj.insert("ci_level".into(), json!(cfg.bootstrap.ci_level));
        obj.insert("replicates".into(), json!(cfg.bootstrap.replicates));
        obj.insert("seed".into(), json!(cfg.bootstrap.seed));
        obj.insert(
            "ci".into(),
            json!(b.ci.iter().map(|&(lower, upper)| Interval { lower, upper }).collect::<Vec<_>>()),
        );
        obj.insert("se".into(), json!(b.se));
        obj.insert("fallback_cells".into(), json!(b.fallback_cells));
    }

    dump_audit(opts, &snapshot)?;
    match out {
        Some(path) => io::write_json_atomic(path, &doc)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &doc).map_err(|e| Error::Invariant(e.to_string()))?;
            writeln!(stdout)?;
        }
    }
    Ok(0)
}

fn dump_audit(opts: &RunOpts, snapshot: &AuditSnapshot) -> Result<()> {
    if opts.verbose {
        let s = serde_json::to_string_pretty(snapshot).map_err(|e| Error::Invariant(e.to_string()))?;
        eprintln!("{s}");
    }
    Ok(())
}

fn indexed_path(path: &Path, k: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{k}"),
    };
    path.with_file_name(name)
}

fn cmd_impute(votes: &Path, out: &Path, report: Option<&Path>, multiple: u64, opts: &RunOpts) -> Result<i32> {
    let cfg = opts.resolve()?;
    if multiple == 0 {
        return Err(Error::InvalidConfig("--multiple must be at least 1".into()));
    }
    let panel = io::ingest(votes)?;
    if let Some(code) = check_min_data(&panel, &cfg)? {
        return Ok(code);
    }
    let audit = AuditLog::default();
    let summary = summarize(&panel.tensor);
    let pooled = pool_variances(&summary, &panel.clusters, &cfg.pooling)?;
    let weights = precision_weights(&pooled.v_eff, WeightKind::Feasible)?;
    audit.record_weight_regularity(check_weight_regularity(
        &weights,
        opts.regularity_delta.unwrap_or(1.0 / weights.len() as f64),
    ));

    let mut outputs = Vec::new();
    for k in 0..multiple {
        let seed = cfg.bootstrap.seed.wrapping_add(k);
        let rep = impute_audited(&panel.tensor, &panel.clusters, &weights, seed, &audit)?;
        let (csv_path, json_path) = if multiple == 1 {
            (out.to_path_buf(), report.map(Path::to_path_buf))
        } else {
            (indexed_path(out, k), report.map(|r| indexed_path(r, k)))
        };
        outputs.push((rep, csv_path, json_path));
    }
    audit.verify()?;
    let snapshot = audit.snapshot();

    for (rep, csv_path, json_path) in &outputs {
        io::write_atomic(csv_path, |w| io::write_votes(w, &rep.completed, &panel.clusters, &panel.ids))?;
        if let Some(json_path) = json_path {
            let histogram: serde_json::Map<String, serde_json::Value> = Layer::CHAIN
                .iter()
                .map(|&l| (l.as_str().to_string(), json!(rep.layer_histogram.get(l))))
                .collect();
            let mut doc = json!({
                "filled_cells": rep.filled_cells,
                "layer_histogram": histogram,
                "seed": rep.seed,
                "total_cells": rep.completed.total_cells(),
                "nan_count": crate::diagnostics::scan_nan(&rep.completed),
                "audit": snapshot,
            });
            if opts.verbose {
                doc.as_object_mut().expect("object").insert(
                    "trace".into(),
                    json!(rep
                        .trace
                        .iter()
                        .map(|f| json!({
                            "persona_id": panel.ids.personas[f.persona],
                            "round": f.round,
                            "petal_id": panel.ids.petals[f.petal],
                            "layer": f.layer,
                            "pool_size": f.pool_size,
                            "value": f.value,
                        }))
                        .collect::<Vec<_>>()),
                );
            }
            io::write_json_atomic(json_path, &doc)?;
        }
    }
    dump_audit(opts, &snapshot)?;
    Ok(0)
}

fn load_scenario(path: &Path, opts: &RunOpts) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    let mut s: Scenario = toml::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    if let Some(r) = opts.replicates {
        s.replicates = r;
    }
    if let Some(l) = opts.ci_level {
        s.ci_level = l;
    }
    Ok(s)
}

fn report_csv(w: &mut dyn Write, label: &str, r: &MonteCarloReport, header: bool) -> Result<()> {
    if header {
        writeln!(w, "experiment,petal,mse_owb_ideal,mse_owb_feasible,mse_uniform,coverage")?;
    }
    for j in 0..r.mse_uniform.per_petal.len() {
        let cov = r
            .empirical_coverage
            .as_ref()
            .map(|c| c[j].to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{label},{j},{},{},{},{cov}",
            r.mse_owb_ideal.per_petal[j], r.mse_owb_feasible.per_petal[j], r.mse_uniform.per_petal[j]
        )?;
    }
    Ok(())
}

fn scan_report(audit: &AuditLog, label: &str, r: &MonteCarloReport) {
    audit.scan(label, &r.mse_owb_ideal.per_petal);
    audit.scan(label, &r.mse_owb_feasible.per_petal);
    audit.scan(label, &r.mse_uniform.per_petal);
    audit.scan(label, &vec![r.analytic_variance_ratio, r.empirical_variance_ratio]);
}

fn cmd_simulate(scenario: &Path, out_dir: &Path, opts: &RunOpts) -> Result<i32> {
    let cfg = opts.resolve()?;
    let s = load_scenario(scenario, opts)?;
    let params = s.params()?;
    std::fs::create_dir_all(out_dir)?;
    let (tensor, truth) = generate(&params)?;
    let report = run_mse_experiment(&params, s.n_sims, &cfg.pooling)?;

    let audit = AuditLog::default();
    scan_report(&audit, "mse_report", &report);
    audit.verify()?;

    let ids = io::default_ids(&tensor, &params.clusters);
    io::write_atomic(out_dir.join("votes.csv"), |w| io::write_votes(w, &tensor, &params.clusters, &ids))?;
    io::write_json_atomic(out_dir.join("truth.json"), &truth)?;
    io::write_json_atomic(out_dir.join("mse_report.json"), &json!({ "scenario": s, "mse": report }))?;
    io::write_atomic(out_dir.join("mse_report.csv"), |w| report_csv(w, "mse", &report, true))?;
    dump_audit(opts, &audit.snapshot())?;
    Ok(0)
}

fn cmd_bench(scenario: &Path, out_dir: &Path, opts: &RunOpts) -> Result<i32> {
    let cfg = opts.resolve()?;
    let s = load_scenario(scenario, opts)?;
    let params = s.params()?;
    std::fs::create_dir_all(out_dir)?;

    let t = Instant::now();
    let mse = run_mse_experiment(&params, s.n_sims, &cfg.pooling)?;
    let mse_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let coverage = run_coverage_experiment(&params, s.n_sims, s.ci_level, s.replicates, &cfg.pooling)?;
    let coverage_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let shrinkage = run_shrinkage_experiment(&params, s.n_sims, &cfg.pooling, PersonaShrinkage::PseudoCount)?;
    let shrinkage_secs = t.elapsed().as_secs_f64();

    let n = params.n_personas() as f64;
    let delta = opts.regularity_delta.unwrap_or(1.0 / n);
    let t = Instant::now();
    let regularity = run_regularity_experiment(&params, s.n_sims, &cfg.pooling, delta)?;
    let regularity_secs = t.elapsed().as_secs_f64();

    let audit = AuditLog::default();
    scan_report(&audit, "mse", &mse);
    scan_report(&audit, "coverage", &coverage);
    audit.scan("shrinkage", &vec![shrinkage.mse_pooled, shrinkage.mse_raw]);
    audit.scan("regularity", &regularity.values);
    audit.verify()?;

    let doc = json!({
        "scenario": s,
        "mse": mse,
        "coverage": coverage,
        "shrinkage": shrinkage,
        "weight_regularity": {
            "delta": regularity.delta,
            "pass_rate": regularity.pass_rate,
            "min_value": regularity.values.iter().cloned().fold(f64::INFINITY, f64::min),
        },
        "elapsed_seconds": {
            "mse": mse_secs,
            "coverage": coverage_secs,
            "shrinkage": shrinkage_secs,
            "weight_regularity": regularity_secs,
        },
    });
    io::write_json_atomic(out_dir.join("bench_report.json"), &doc)?;
    io::write_atomic(out_dir.join("bench_report.csv"), |w| {
        report_csv(w, "mse", &mse, true)?;
        report_csv(w, "coverage", &coverage, false)
    })?;
    dump_audit(opts, &audit.snapshot())?;
    Ok(0)
}

use owb_core::io;
use owb_core::model::{summarize, ClusterMap};
use owb_core::simulator::{generate, SimulationParams};
use owb_core::weights::{precision_weights, WeightKind};
use owb_core::{
    estimate_archetype, estimate_uniform, impute, pool_variances, scan_nan, weighted_bootstrap, BootstrapConfig,
    PoolingConfig,
};

fn params() -> SimulationParams {
    SimulationParams {
        mu: vec![-1.0, 0.0, 2.5],
        sigma_alpha2: 0.3,
        sigma_gamma2: 0.1,
        sigma2: 2.0,
        n_per_persona: (0..40).map(|i| 2 + i % 9).collect(),
        clusters: ClusterMap::round_robin(40, 4).unwrap(),
        missing_rate: 0.25,
        petal_scale: Some(vec![1.0, 0.5, 2.0]),
        seed: 17,
    }
}

#[test]
fn simulated_panel_through_every_stage() {
    let p = params();
    let (tensor, truth) = generate(&p).unwrap();
    assert_eq!(tensor.n_personas(), 40);
    tensor.check_min_data().unwrap();

    let summary = summarize(&tensor);
    let pooled = pool_variances(&summary, &p.clusters, &PoolingConfig::default()).unwrap();
    assert!(!pooled.degenerate);
    assert!(pooled.v_eff.iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(pooled.lambda_persona.iter().all(|l| (0.0..=1.0).contains(l)));

    let w = precision_weights(&pooled.v_eff, WeightKind::Feasible).unwrap();
    let est = estimate_archetype(&summary, &w).unwrap();
    let uni = estimate_uniform(&summary).unwrap();
    for j in 0..3 {
        let means: Vec<f64> = (0..40).filter_map(|q| summary.means[q][j]).collect();
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= est.mu_hat[j] && est.mu_hat[j] <= hi);
        assert!((est.mu_hat[j] - truth.mu[j]).abs() < 1.5);
        assert!(uni.mu_hat[j].is_finite());
    }

    let boot = weighted_bootstrap(&summary, &w, &BootstrapConfig { replicates: 400, ci_level: 0.9, seed: 3 }).unwrap();
    assert_eq!(boot.replicate_mu.len(), 400);
    for j in 0..3 {
        assert!(boot.ci[j].0 <= boot.ci[j].1);
        assert!(boot.se[j] > 0.0);
    }

    let rep = impute(&tensor, &p.clusters, &w, 9).unwrap();
    assert_eq!(scan_nan(&rep.completed), 0);
    assert_eq!(rep.filled_cells, tensor.missing_cells());
    assert_eq!(rep.layer_histogram.total(), rep.filled_cells);
}

#[test]
fn csv_round_trip_preserves_estimates() {
    let p = params();
    let (tensor, _) = generate(&p).unwrap();
    let ids = io::default_ids(&tensor, &p.clusters);
    let mut buf = Vec::new();
    io::write_votes(&mut buf, &tensor, &p.clusters, &ids).unwrap();
    let panel = io::ingest_reader(buf.as_slice()).unwrap();
    assert_eq!(panel.tensor, tensor);
    assert_eq!(panel.clusters, p.clusters);

    let fit = |t: &owb_core::VoteTensor, c: &ClusterMap| {
        let s = summarize(t);
        let pooled = pool_variances(&s, c, &PoolingConfig::default()).unwrap();
        let w = precision_weights(&pooled.v_eff, WeightKind::Feasible).unwrap();
        estimate_archetype(&s, &w).unwrap().mu_hat
    };
    let a = fit(&tensor, &p.clusters);
    let b = fit(&panel.tensor, &panel.clusters);
    assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
}

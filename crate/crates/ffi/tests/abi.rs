use std::ffi::{CStr, CString};
use std::ptr;

use owb_ffi::*;

unsafe fn panel(rounds: &[usize], n_petals: usize, values: &[f64], clusters: Option<&[usize]>) -> (OwbStatus, *mut OwbPanel) {
    let mut out = ptr::null_mut();
    let s = owb_panel_new(
        rounds.len(),
        n_petals,
        rounds.as_ptr(),
        values.as_ptr(),
        clusters.map_or(ptr::null(), |c| c.as_ptr()),
        &mut out,
    );
    (s, out)
}

fn last_error() -> Option<String> {
    let p = owb_last_error_message();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

// three personas, two petals, ragged rounds
const ROUNDS: [usize; 3] = [2, 3, 1];
const VALUES: [f64; 12] = [
    1.0, 2.0, 3.0, 4.0, // p0
    0.0, f64::NAN, 2.0, 1.0, 4.0, 3.0, // p1
    5.0, f64::NAN, // p2
];

#[test]
fn panel_lifecycle_and_accessors() {
    unsafe {
        let (s, p) = panel(&ROUNDS, 2, &VALUES, Some(&[0, 0, 1]));
        assert_eq!(s, OwbStatus::Ok);
        assert!(!p.is_null());
        assert_eq!(owb_panel_n_personas(p), 3);
        assert_eq!(owb_panel_n_petals(p), 2);
        assert_eq!(owb_panel_total_cells(p), 12);
        owb_panel_free(p);
        owb_panel_free(ptr::null_mut());
        assert_eq!(owb_panel_n_personas(ptr::null()), 0);
    }
}

#[test]
fn estimate_is_convex_and_weights_normalized() {
    unsafe {
        let (_, p) = panel(&ROUNDS, 2, &VALUES, None);
        let mut mu = [f64::NAN; 2];
        let mut w = [f64::NAN; 3];
        assert_eq!(owb_estimate(p, ptr::null(), mu.as_mut_ptr(), w.as_mut_ptr()), OwbStatus::Ok);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x > 0.0));
        // petal 0 persona means 2, 2, 5; petal 1 persona means 3, 2 (p2 missing)
        assert!((2.0..=5.0).contains(&mu[0]));
        assert!((2.0..=3.0).contains(&mu[1]));

        let cfg = owb_pooling_config_default();
        assert_eq!(cfg.prior_strength_persona, 5.0);
        let mut mu2 = [0.0; 2];
        assert_eq!(owb_estimate(p, &cfg, mu2.as_mut_ptr(), ptr::null_mut()), OwbStatus::Ok);
        assert_eq!(mu, mu2);
        owb_panel_free(p);
    }
}

#[test]
fn precision_weights_match_inverse_variance() {
    let v = [1.0, 2.0, 4.0];
    let mut w = [0.0; 3];
    unsafe {
        assert_eq!(owb_precision_weights(v.as_ptr(), 3, w.as_mut_ptr()), OwbStatus::Ok);
        let bad = [1.0, 0.0];
        assert_eq!(owb_precision_weights(bad.as_ptr(), 2, w.as_mut_ptr()), OwbStatus::NonPositiveVariance);
    }
    let expect = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
    for (a, b) in w.iter().zip(expect) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(last_error().unwrap().contains("index 1"));
}

#[test]
fn bootstrap_interval_brackets_estimate_and_is_reproducible() {
    unsafe {
        let (_, p) = panel(&ROUNDS, 2, &VALUES, None);
        let run = |seed| {
            let (mut mu, mut lo, mut hi) = ([0.0; 2], [0.0; 2], [0.0; 2]);
            let s = owb_bootstrap_ci(p, ptr::null(), 500, 0.9, seed, mu.as_mut_ptr(), lo.as_mut_ptr(), hi.as_mut_ptr());
            assert_eq!(s, OwbStatus::Ok);
            (mu, lo, hi)
        };
        let (mu, lo, hi) = run(7);
        for j in 0..2 {
            assert!(lo[j] <= hi[j]);
            assert!(lo[j].is_finite() && hi[j].is_finite() && mu[j].is_finite());
        }
        assert_eq!(run(7), (mu, lo, hi));
        let (mut a, mut b, mut c) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        let s = owb_bootstrap_ci(p, ptr::null(), 0, 0.9, 1, a.as_mut_ptr(), b.as_mut_ptr(), c.as_mut_ptr());
        assert_eq!(s, OwbStatus::InvalidArgument);
        owb_panel_free(p);
    }
}

#[test]
fn impute_fills_with_observed_values_deterministically() {
    unsafe {
        let (_, p) = panel(&ROUNDS, 2, &VALUES, Some(&[0, 1, 1]));
        let n = owb_panel_total_cells(p);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut filled = 0usize;
        assert_eq!(owb_impute(p, 42, a.as_mut_ptr(), &mut filled), OwbStatus::Ok);
        assert_eq!(owb_impute(p, 42, b.as_mut_ptr(), ptr::null_mut()), OwbStatus::Ok);
        assert_eq!(filled, 2);
        assert_eq!(a, b);
        let observed: Vec<f64> = VALUES.iter().copied().filter(|v| v.is_finite()).collect();
        for (i, (&got, &orig)) in a.iter().zip(&VALUES).enumerate() {
            assert!(got.is_finite());
            if orig.is_finite() {
                assert_eq!(got, orig, "cell {i} changed");
            } else {
                assert!(observed.contains(&got));
            }
        }
        owb_panel_free(p);
    }
}

#[test]
fn data_violations_map_to_status_codes() {
    unsafe {
        let (_, p) = panel(&[2, 1], 2, &[1.0, f64::NAN, 2.0, f64::NAN, 3.0, f64::NAN], None);
        let mut mu = [0.0; 2];
        assert_eq!(owb_estimate(p, ptr::null(), mu.as_mut_ptr(), ptr::null_mut()), OwbStatus::EmptyPetal);
        assert!(last_error().unwrap().contains("petal 1"));
        let mut out = [0.0; 6];
        assert_eq!(owb_impute(p, 1, out.as_mut_ptr(), ptr::null_mut()), OwbStatus::EmptyPetal);
        owb_panel_free(p);

        let (_, p) = panel(&[1], 2, &[f64::NAN, f64::INFINITY], None);
        assert_eq!(owb_impute(p, 1, out.as_mut_ptr(), ptr::null_mut()), OwbStatus::NoDataAnywhere);
        owb_panel_free(p);
    }
}

#[test]
fn argument_errors() {
    unsafe {
        let mut mu = [0.0; 2];
        assert_eq!(owb_estimate(ptr::null(), ptr::null(), mu.as_mut_ptr(), ptr::null_mut()), OwbStatus::NullPointer);
        assert!(last_error().unwrap().contains("panel"));

        let (s, p) = panel(&[1, 1], 2, &[1.0; 4], Some(&[0, 2]));
        assert_eq!(s, OwbStatus::InvalidArgument);
        assert!(p.is_null());

        let rounds = [1usize];
        assert_eq!(
            owb_panel_new(1, 1, rounds.as_ptr(), ptr::null(), ptr::null(), &mut ptr::null_mut()),
            OwbStatus::NullPointer
        );

        let (_, p) = panel(&[1], 2, &[1.0, 2.0], None);
        let cfg = OwbPoolingConfig {
            prior_strength_persona: -1.0,
            ..owb_pooling_config_default()
        };
        assert_eq!(owb_estimate(p, &cfg, mu.as_mut_ptr(), ptr::null_mut()), OwbStatus::InvalidArgument);
        assert_eq!(owb_estimate(p, ptr::null(), mu.as_mut_ptr(), ptr::null_mut()), OwbStatus::Ok);
        assert!(last_error().is_none());
        owb_panel_free(p);
    }
}

#[test]
fn csv_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("votes.csv");
    std::fs::write(
        &path,
        "persona_id,cluster_id,round,petal_id,value\na,x,0,j1,1.5\na,x,1,j1,2.5\nb,y,0,j1,4\n",
    )
    .unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(owb_panel_from_csv(c.as_ptr(), &mut p), OwbStatus::Ok);
        assert_eq!(owb_panel_n_personas(p), 2);
        assert_eq!(owb_panel_total_cells(p), 3);
        owb_panel_free(p);

        let missing = CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
        assert_eq!(owb_panel_from_csv(missing.as_ptr(), &mut p), OwbStatus::Io);
        assert!(p.is_null());

        std::fs::write(&path, "persona_id,cluster_id,round,petal_id,value\na,x,zero,j1,1\n").unwrap();
        assert_eq!(owb_panel_from_csv(c.as_ptr(), &mut p), OwbStatus::Parse);
        assert!(last_error().unwrap().starts_with("line 2"));
    }
}

#[test]
fn status_names() {
    let name = |s| unsafe { CStr::from_ptr(owb_status_str(s)) }.to_str().unwrap().to_owned();
    assert_eq!(name(OwbStatus::Ok), "OK");
    assert_eq!(name(OwbStatus::EmptyPetal), "EMPTY_PETAL");
    assert_eq!(name(OwbStatus::Panic), "PANIC");
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/owb.h")).unwrap();
    assert!(header.starts_with("#ifndef OWB_H"));
    for name in [
        "typedef struct OwbPanel OwbPanel;",
        "OWB_STATUS_EMPTY_PETAL = 3",
        "OWB_STATUS_PANIC = 9",
        "owb_pooling_config_default(void)",
        "owb_panel_new(",
        "owb_panel_from_csv(",
        "owb_panel_free(",
        "owb_panel_n_personas(",
        "owb_panel_n_petals(",
        "owb_panel_total_cells(",
        "owb_precision_weights(",
        "owb_estimate(",
        "owb_bootstrap_ci(",
        "owb_impute(",
        "owb_last_error_message(void)",
        "owb_status_str(",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = env!("CARGO_MANIFEST_DIR");
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(format!("{dir}/include"))
        .arg(format!("{dir}/examples/demo.c"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

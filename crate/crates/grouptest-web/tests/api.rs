//! Native tests of the browser API: the JSON-string functions are pure
//! Rust, so everything the page calls is verified here against the core
//! library without a wasm runtime.

use grouptest::{best_k, evaluate, Budget, Design, Family, Model};
use grouptest_web::{outcome_distribution, risk_curve, search_landscape};
use serde_json::{json, Value};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn risk_curve_matches_direct_evaluation() {
    let out = parse(risk_curve(
        &json!({
            "estimator": "burrows", "model": "b", "k": 5, "c": 10,
            "p_min": 0.05, "p_max": 0.25, "points": 5
        })
        .to_string(),
    ));
    assert!(out.get("error").is_none(), "{out}");
    let points = out["points"].as_array().unwrap();
    assert_eq!(points.len(), 5);
    let design = Design::new(Model::B, 5, 10).unwrap();
    for (i, pt) in points.iter().enumerate() {
        let p = 0.05 + 0.05 * i as f64;
        assert!((pt["p"].as_f64().unwrap() - p).abs() < 1e-12);
        let r = evaluate(&Family::Burrows, &design, pt["p"].as_f64().unwrap(), 1e-6).unwrap();
        assert_eq!(pt["mse_x1e4"].as_f64().unwrap(), r.mse_x1e4);
        assert_eq!(pt["bias"].as_f64().unwrap(), r.bias);
        assert_eq!(pt["expected_n"].as_f64().unwrap(), r.expected_n);
    }
    assert_eq!(out["c"], 10);
    assert_eq!(out["model"], "b");
}

#[test]
fn risk_curve_tunes_shrinkage_from_p0() {
    let out = parse(risk_curve(
        &json!({
            "estimator": "pt_c", "model": "c", "k": 4, "c": 6, "p0": 0.1,
            "p_min": 0.02, "p_max": 0.3, "points": 3
        })
        .to_string(),
    ));
    assert!(out.get("error").is_none(), "{out}");
    let alpha = out["alpha"].as_f64().unwrap();
    let beta = out["beta"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&alpha));
    assert!((1.0..=50.0).contains(&beta));
}

#[test]
fn risk_curve_rejects_partial_shrinkage_parameters() {
    let out = parse(risk_curve(
        &json!({
            "estimator": "pt_c", "model": "c", "k": 4, "c": 6, "alpha": 0.5,
            "p_min": 0.02, "p_max": 0.3, "points": 3
        })
        .to_string(),
    ));
    assert_eq!(out["error"], "INVALID_INPUT");
}

#[test]
fn risk_curve_rejects_bad_grid_and_unknown_fields() {
    let bad_grid = parse(risk_curve(
        &json!({
            "estimator": "mle", "model": "a", "k": 5, "n": 25,
            "p_min": 0.5, "p_max": 0.1, "points": 5
        })
        .to_string(),
    ));
    assert_eq!(bad_grid["error"], "INVALID_INPUT");

    let typo = parse(risk_curve(
        &json!({
            "estimator": "mle", "model": "a", "k": 5, "n": 25,
            "p_min": 0.1, "p_max": 0.5, "points": 5, "pointz": 7
        })
        .to_string(),
    ));
    assert_eq!(typo["error"], "INVALID_INPUT");

    let malformed = parse(risk_curve("{not json"));
    assert_eq!(malformed["error"], "INVALID_INPUT");
}

#[test]
fn search_landscape_agrees_with_the_library_search() {
    let out = parse(search_landscape(
        &json!({ "estimator": "mle", "model": "a", "p": 0.1, "en": 25.0 })
        .to_string(),
    ));
    assert!(out.get("error").is_none(), "{out}");
    let budget = Budget::new(25.0).unwrap();
    let want = best_k(&Family::Mle, Model::A, 0.1, &budget, (2, 50), 1e-6).unwrap();
    assert_eq!(out["k_star"].as_u64().unwrap() as u32, want.k_star);
    assert_eq!(out["c_star"].as_u64().unwrap(), want.c_star);
    let points = out["points"].as_array().unwrap();
    assert_eq!(points.len() as u32, want.feasible_k_count);
    // The marked minimum is indeed the smallest MSE among the points.
    let best_point = points
        .iter()
        .find(|pt| pt["k"].as_u64().unwrap() as u32 == want.k_star)
        .unwrap();
    let best_mse = best_point["mse_x1e4"].as_f64().unwrap();
    for pt in points {
        assert!(pt["mse_x1e4"].as_f64().unwrap() >= best_mse);
    }
}

#[test]
fn search_landscape_records_skipped_pool_sizes() {
    // At p = 0.012 under plan b, small pool sizes are infeasible within the
    // budget and the next few force c = 1, which the bias-corrected
    // estimator rejects as degenerate.
    let out = parse(search_landscape(
        &json!({ "estimator": "burrows", "model": "b", "p": 0.012, "en": 25.0, "kmax": 20 })
        .to_string(),
    ));
    assert!(out.get("error").is_none(), "{out}");
    let skipped = out["skipped"].as_array().unwrap();
    assert!(!skipped.is_empty());
    let reasons: Vec<&str> = skipped.iter().map(|s| s["reason"].as_str().unwrap()).collect();
    assert!(reasons.iter().any(|r| r.contains("infeasible")));
    assert!(reasons.iter().any(|r| r.contains("degenerate")));
}

#[test]
fn search_landscape_with_no_feasible_design_reports_infeasible() {
    let out = parse(search_landscape(
        &json!({ "estimator": "burrows", "model": "b", "p": 0.01, "en": 25.0, "kmax": 2 })
        .to_string(),
    ));
    assert_eq!(out["error"], "INFEASIBLE_DESIGN");
}

#[test]
fn outcome_distribution_preserves_mass_under_binning() {
    // Support of length 201 (model a, n = 200) binned into at most 50 bins.
    let out = parse(outcome_distribution(
        &json!({ "model": "a", "k": 3, "n": 200, "p": 0.05, "max_points": 50 })
        .to_string(),
    ));
    assert!(out.get("error").is_none(), "{out}");
    let bins = out["bins"].as_array().unwrap();
    assert!(bins.len() <= 51);
    let total: f64 = bins.iter().map(|b| b["weight"].as_f64().unwrap()).sum();
    let tail = out["tail_mass"].as_f64().unwrap();
    assert!((total + tail - 1.0).abs() < 1e-9, "mass defect: {}", total + tail - 1.0);
    assert_eq!(out["truncation_bound"].as_u64().unwrap(), 200);
    // Bin starts advance by the reported stride, and estimates rise with
    // the count under plan a.
    let stride = out["stride"].as_u64().unwrap();
    let mut prev_estimate = -1.0;
    for (i, b) in bins.iter().enumerate() {
        assert_eq!(b["count"].as_u64().unwrap(), i as u64 * stride);
        let est = b["estimate"].as_f64().unwrap();
        assert!(est >= prev_estimate);
        prev_estimate = est;
    }
}

#[test]
fn outcome_distribution_unbinned_when_support_is_small() {
    let out = parse(outcome_distribution(
        &json!({ "model": "b", "k": 4, "c": 3, "p": 0.2 })
        .to_string(),
    ));
    assert!(out.get("error").is_none(), "{out}");
    assert_eq!(out["stride"], 1);
    let theta = out["theta"].as_f64().unwrap();
    assert!((theta - (1.0 - 0.8f64.powi(4))).abs() < 1e-15);
    // First weight is P(y = 0) = θ^c for the stop-on-positives plan.
    let bins = out["bins"].as_array().unwrap();
    assert!((bins[0]["weight"].as_f64().unwrap() - theta.powi(3)).abs() < 1e-12);
}

#[test]
fn outcome_distribution_rejects_oversized_supports() {
    // Stop on the 20th negative pool with pools positive with chance
    // ≈ 1 − 10⁻⁶ each: tens of millions of support points, beyond the
    // interactive limit (though still within the CLI's reach).
    let out = parse(outcome_distribution(
        &json!({ "model": "c", "k": 20, "c": 20, "p": 0.5, "epsilon": 1e-8 })
        .to_string(),
    ));
    assert_eq!(out["error"], "INVALID_INPUT");
    assert!(out["message"].as_str().unwrap().contains("epsilon"));
}

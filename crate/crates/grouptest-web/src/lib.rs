//! Browser front end for the `grouptest` crate.
//!
//! Three interactive operations, each a pure JSON-string function so the
//! same code is exercised by native tests and, behind thin
//! `wasm-bindgen` glue, by the static page in `www/`:
//!
//! * [`risk_curve`] — exact bias and MSE of one estimator on one design,
//!   swept across a prevalence grid;
//! * [`search_landscape`] — per-pool-size exact MSE under a test budget,
//!   with the minimizing design highlighted;
//! * [`outcome_distribution`] — the truncated pmf of the observed count,
//!   with the point estimate attached to each outcome.
//!
//! Requests and responses are JSON objects; failures return
//! `{"error": CODE, "message": …}` with the same machine-readable codes the
//! command-line front end uses.

use grouptest::cli::{resolve_family, PtResolution};
use grouptest::{
    evaluate, select_c, Budget, Design, Error, Model, OutcomeDistribution, Result,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

fn default_epsilon() -> f64 {
    1e-6
}

/// Largest truncated support the pmf explorer will stream; beyond this the
/// request is rejected with a hint to raise epsilon (interactive use only —
/// the CLI has no such limit).
const MAX_PMF_SUPPORT: u64 = 5_000_000;

fn err_json(e: &Error) -> String {
    json!({ "error": e.code(), "message": e.to_string() }).to_string()
}

fn parse_request<'a, T: Deserialize<'a>>(request: &'a str) -> Result<T> {
    serde_json::from_str(request)
        .map_err(|e| Error::InvalidInput(format!("malformed request: {e}")))
}

/// `n` for the fixed-size plan, `c` for the sequential plans; the other
/// field must be absent.
fn size_for(model: Model, n: Option<u64>, c: Option<u64>) -> Result<u64> {
    match (model, n, c) {
        (Model::A, Some(n), None) => Ok(n),
        (Model::A, _, _) => Err(Error::InvalidInput(
            "model a takes the field \"n\" (and no \"c\")".into(),
        )),
        (_, None, Some(c)) => Ok(c),
        (model, _, _) => Err(Error::InvalidInput(format!(
            "model {} takes the field \"c\" (and no \"n\")",
            model.label()
        ))),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RiskCurveRequest {
    estimator: String,
    model: String,
    k: u32,
    n: Option<u64>,
    c: Option<u64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    p0: Option<f64>,
    p_min: f64,
    p_max: f64,
    points: u32,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

#[derive(Serialize)]
struct CurvePoint {
    p: f64,
    bias: f64,
    rel_bias_pct: f64,
    mse_x1e4: f64,
    expected_n: f64,
}

fn risk_curve_impl(request: &str) -> Result<String> {
    let req: RiskCurveRequest = parse_request(request)?;
    let model = Model::parse(&req.model)?;
    let size = size_for(model, req.n, req.c)?;
    let design = Design::new(model, req.k, size)?;
    if !(req.p_min > 0.0 && req.p_max < 1.0 && req.p_min <= req.p_max) {
        return Err(Error::InvalidInput(format!(
            "prevalence grid must satisfy 0 < p_min <= p_max < 1, got [{}, {}]",
            req.p_min, req.p_max
        )));
    }
    if !(2..=1001).contains(&req.points) {
        return Err(Error::InvalidInput(format!(
            "points must be between 2 and 1001, got {}",
            req.points
        )));
    }
    let pt = PtResolution { alpha: req.alpha, beta: req.beta, p0: req.p0 };
    let family = resolve_family(&req.estimator, model, req.k, size, &pt, req.epsilon)?;
    let mut points = Vec::with_capacity(req.points as usize);
    for i in 0..req.points {
        let t = i as f64 / (req.points - 1) as f64;
        let p = req.p_min + t * (req.p_max - req.p_min);
        let r = evaluate(&family, &design, p, req.epsilon)?;
        points.push(CurvePoint {
            p,
            bias: r.bias,
            rel_bias_pct: r.rel_bias_pct,
            mse_x1e4: r.mse_x1e4,
            expected_n: r.expected_n,
        });
    }
    let mut out = json!({
        "estimator": req.estimator,
        "model": model.label(),
        "k": design.k,
        "points": points,
    });
    let record = out.as_object_mut().unwrap();
    record.insert(if model == Model::A { "n" } else { "c" }.into(), json!(design.size));
    let (alpha, beta) = family.pt_params();
    if let Some(a) = alpha {
        record.insert("alpha".into(), json!(a));
    }
    if let Some(b) = beta {
        record.insert("beta".into(), json!(b));
    }
    Ok(out.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchLandscapeRequest {
    estimator: String,
    model: String,
    p: f64,
    en: f64,
    #[serde(default = "default_kmax")]
    kmax: u32,
    alpha: Option<f64>,
    beta: Option<f64>,
    p0: Option<f64>,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
}

fn default_kmax() -> u32 {
    50
}

#[derive(Serialize)]
struct LandscapePoint {
    k: u32,
    c: u64,
    mse_x1e4: f64,
    rel_bias_pct: f64,
    expected_n: f64,
}

fn search_landscape_impl(request: &str) -> Result<String> {
    let req: SearchLandscapeRequest = parse_request(request)?;
    let model = Model::parse(&req.model)?;
    if !(2..=60).contains(&req.kmax) {
        return Err(Error::InvalidInput(format!(
            "kmax must be between 2 and 60 for interactive use, got {}",
            req.kmax
        )));
    }
    let budget = Budget::new(req.en)?;
    let pt = PtResolution { alpha: req.alpha, beta: req.beta, p0: req.p0 };
    let mut points: Vec<LandscapePoint> = Vec::new();
    let mut skipped: Vec<serde_json::Value> = Vec::new();
    let mut best: Option<(u32, u64, f64)> = None;
    for k in 2..=req.kmax {
        let size = match model {
            Model::A => budget.target_en.floor() as u64,
            _ => match select_c(model, k, req.p, &budget) {
                Ok(c) => c,
                Err(e @ Error::InfeasibleDesign(_)) => {
                    skipped.push(json!({ "k": k, "reason": e.to_string() }));
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        let design = Design::new(model, k, size)?;
        // Shrinkage parameters are re-resolved per candidate design, so a
        // p0-tuned curve compares each pool size at its own best tuning.
        let family = match resolve_family(&req.estimator, model, k, size, &pt, req.epsilon) {
            Ok(f) => f,
            Err(e @ (Error::DegenerateEstimator(_) | Error::InfeasibleDesign(_))) => {
                skipped.push(json!({ "k": k, "reason": e.to_string() }));
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Err(e) = family.validate(&design) {
            skipped.push(json!({ "k": k, "reason": e.to_string() }));
            continue;
        }
        let r = evaluate(&family, &design, req.p, req.epsilon)?;
        if best.is_none_or(|(_, _, m)| r.mse < m) {
            best = Some((k, size, r.mse));
        }
        points.push(LandscapePoint {
            k,
            c: size,
            mse_x1e4: r.mse_x1e4,
            rel_bias_pct: r.rel_bias_pct,
            expected_n: r.expected_n,
        });
    }
    let Some((k_star, c_star, _)) = best else {
        return Err(Error::InfeasibleDesign(format!(
            "no pool size in 2..={} admits a design within the budget",
            req.kmax
        )));
    };
    Ok(json!({
        "estimator": req.estimator,
        "model": model.label(),
        "p": req.p,
        "target_en": req.en,
        "k_star": k_star,
        "c_star": c_star,
        "points": points,
        "skipped": skipped,
    })
    .to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OutcomeDistributionRequest {
    model: String,
    k: u32,
    n: Option<u64>,
    c: Option<u64>,
    p: f64,
    #[serde(default = "default_epsilon")]
    epsilon: f64,
    #[serde(default = "default_max_points")]
    max_points: u32,
}

fn default_max_points() -> u32 {
    512
}

#[derive(Serialize)]
struct PmfBin {
    /// First outcome count in the bin.
    count: u64,
    /// Total probability mass of the bin.
    weight: f64,
    /// Maximum-likelihood estimate at the bin's first count.
    estimate: f64,
}

fn outcome_distribution_impl(request: &str) -> Result<String> {
    let req: OutcomeDistributionRequest = parse_request(request)?;
    let model = Model::parse(&req.model)?;
    let size = size_for(model, req.n, req.c)?;
    let design = Design::new(model, req.k, size)?;
    if req.max_points < 2 {
        return Err(Error::InvalidInput("max_points must be at least 2".into()));
    }
    let dist = OutcomeDistribution::for_design(&design, req.p)?;
    let bound = dist.truncation_bound(req.epsilon)?;
    if bound > MAX_PMF_SUPPORT {
        return Err(Error::InvalidInput(format!(
            "truncated support has {bound} points, beyond the interactive limit of {MAX_PMF_SUPPORT}; \
             raise epsilon or shrink the design"
        )));
    }
    // Fixed-width binning keeps the payload bounded while preserving mass.
    let stride = (bound / req.max_points as u64) + 1;
    let mut bins: Vec<PmfBin> = Vec::new();
    let truncation = dist.for_each_weight(req.epsilon, |count, w| {
        if count % stride == 0 {
            let estimate = grouptest::estimate(&grouptest::Family::Mle, &design, count)
                .map(|e| e.value)
                .unwrap_or(f64::NAN);
            bins.push(PmfBin { count, weight: 0.0, estimate });
        }
        bins.last_mut().expect("count 0 opens the first bin").weight += w;
    })?;
    Ok(json!({
        "model": model.label(),
        "k": design.k,
        "theta": dist.theta(),
        "stride": stride,
        "truncation_bound": truncation.bound,
        "tail_mass": truncation.tail_mass,
        "bins": bins,
    })
    .to_string())
}

/// Exact bias/MSE of one estimator on one design across a prevalence grid.
#[wasm_bindgen]
pub fn risk_curve(request: &str) -> String {
    risk_curve_impl(request).unwrap_or_else(|e| err_json(&e))
}

/// Exact MSE for every pool size under a test budget, best design marked.
#[wasm_bindgen]
pub fn search_landscape(request: &str) -> String {
    search_landscape_impl(request).unwrap_or_else(|e| err_json(&e))
}

/// Truncated outcome pmf (binned for display) with per-outcome estimates.
#[wasm_bindgen]
pub fn outcome_distribution(request: &str) -> String {
    outcome_distribution_impl(request).unwrap_or_else(|e| err_json(&e))
}

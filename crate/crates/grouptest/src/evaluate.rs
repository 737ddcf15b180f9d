//! Exact (truncated-sum) bias, relative bias, and MSE of an estimator under
//! a design at a given prevalence.
//!
//! Both moments are plain sums of (p̂(count) − p) and its square against the
//! outcome pmf: over the full support for the fixed plan, and over
//! {0, …, ν} for the sequential plans, where ν is the smallest bound with
//! tail mass ≤ ε. The truncated sums are deliberately NOT renormalized by
//! the captured mass — the unbiasedness checks rely on the raw sums.

use serde::Serialize;

use crate::accum::Neumaier;
use crate::design::Design;
use crate::dist::{OutcomeDistribution, Truncation};
use crate::error::{Error, Result};
use crate::estimator::{clamp, Family, StreamingEval};

/// Exact moments of one (estimator, design, prevalence) triple.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalResult {
    /// E[p̂ − p] over the truncated support.
    pub bias: f64,
    /// 100 · bias / p.
    pub rel_bias_pct: f64,
    /// E[(p̂ − p)²] over the truncated support.
    pub mse: f64,
    /// mse · 10⁴ (the usual reporting scale).
    pub mse_x1e4: f64,
    /// Expected number of pooled tests at this prevalence.
    pub expected_n: f64,
    /// Last support point included in the sums.
    pub truncation_bound: u64,
    /// Probability mass beyond the truncation bound.
    pub tail_mass: f64,
    /// Number of support points where the raw estimate left [0,1].
    pub clamp_count: u64,
}

/// Exact bias and MSE of `family` under `design` at prevalence `p`, with
/// tail tolerance `epsilon` (the usual choice is 1e−6).
pub fn evaluate(family: &Family, design: &Design, p: f64, epsilon: f64) -> Result<EvalResult> {
    family.validate(design)?;
    let mut eval = StreamingEval::new(family, design);
    evaluate_with(|count| eval.raw(count), design, p, epsilon)
}

/// The summation engine behind [`evaluate`], generic over the raw estimator
/// map so tests and the shrinkage-parameter optimizer can drive it with
/// arbitrary per-count values.
pub(crate) fn evaluate_with<F: FnMut(u64) -> f64>(
    mut raw: F,
    design: &Design,
    p: f64,
    epsilon: f64,
) -> Result<EvalResult> {
    check_interior(p)?;
    let dist = OutcomeDistribution::for_design(design, p)?;
    let mut bias_acc = Neumaier::new();
    let mut mse_acc = Neumaier::new();
    let mut clamp_count = 0u64;
    let trunc = dist.for_each_weight(epsilon, |count, w| {
        let est = clamp(raw(count));
        if est.clamped {
            clamp_count += 1;
        }
        let d = est.value - p;
        bias_acc.add(w * d);
        mse_acc.add(w * (d * d));
    })?;
    let bias = bias_acc.value();
    let mse = mse_acc.value();
    Ok(EvalResult {
        bias,
        rel_bias_pct: 100.0 * bias / p,
        mse,
        mse_x1e4: mse * 1e4,
        expected_n: design.expected_tests(p),
        truncation_bound: trunc.bound,
        tail_mass: trunc.tail_mass,
        clamp_count,
    })
}

/// Materialized pmf weights over the ε-truncated support (index = count).
/// Used where the same weights are reused against many estimator variants.
pub(crate) fn collect_weights(
    design: &Design,
    p: f64,
    epsilon: f64,
) -> Result<(Vec<f64>, Truncation)> {
    check_interior(p)?;
    let dist = OutcomeDistribution::for_design(design, p)?;
    let mut weights = Vec::new();
    let trunc = dist.for_each_weight(epsilon, |_, w| weights.push(w))?;
    Ok((weights, trunc))
}

fn check_interior(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "prevalence p must lie strictly between 0 and 1, got {p}"
        )));
    }
    Ok(())
}

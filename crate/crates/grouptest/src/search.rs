//! Design search: the MSE-minimizing pool-size scan with budgeted stopping
//! counts, and the shrinkage-parameter optimization against a prior upper
//! bound p0.

use serde::Serialize;

use crate::design::{select_c, Budget, Design, Model};
use crate::dist::OutcomeDistribution;
use crate::error::{Error, Result};
use crate::estimator::{clamp, raw_value, Family};
use crate::evaluate::{collect_weights, evaluate, EvalResult};
use crate::accum::Neumaier;

/// Default pool-size grid for the comparison procedure.
pub const DEFAULT_K_RANGE: (u32, u32) = (2, 50);

/// A pool size the search could not evaluate, and why.
#[derive(Debug, Clone, Serialize)]
pub struct SkippedK {
    pub k: u32,
    pub reason: String,
}

/// Result of a pool-size search.
#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    /// MSE-minimizing pool size (ties go to the smallest k).
    pub k_star: u32,
    /// The winning design's stopping count c — or n under model a.
    pub c_star: u64,
    /// Exact moments of the winner.
    pub result: EvalResult,
    /// How many pool sizes were actually evaluated.
    pub feasible_k_count: u32,
    /// Pool sizes skipped as infeasible or degenerate, with reasons.
    pub skipped_k: Vec<SkippedK>,
}

/// Scan pool sizes `k_range.0..=k_range.1`, derive each k's design under the
/// budget (model a: n = floor(target); models b/c: the largest c within the
/// budget), and return the design minimizing the exact MSE of `family` at
/// prevalence `p`. Ties are broken toward the smallest k.
pub fn best_k(
    family: &Family,
    model: Model,
    p: f64,
    budget: &Budget,
    k_range: (u32, u32),
    epsilon: f64,
) -> Result<SearchOutcome> {
    best_k_with(model, p, budget, k_range, epsilon, |_, _| Ok(*family))
}

/// Like [`best_k`], but the estimator may depend on the candidate design:
/// `family_for(k, size)` is called once per feasible k. Shrinkage rows use
/// this to re-tune (α, β) for every candidate design; an
/// `Error::DegenerateEstimator` or `Error::InfeasibleDesign` return skips
/// that k (recorded with its reason), any other error aborts the search.
pub fn best_k_with<F>(
    model: Model,
    p: f64,
    budget: &Budget,
    k_range: (u32, u32),
    epsilon: f64,
    mut family_for: F,
) -> Result<SearchOutcome>
where
    F: FnMut(u32, u64) -> Result<Family>,
{
    let (k_lo, k_hi) = k_range;
    if k_lo < 2 || k_lo > k_hi {
        return Err(Error::InvalidInput(format!(
            "pool-size range must satisfy 2 <= lo <= hi, got [{k_lo}, {k_hi}]"
        )));
    }
    let mut skipped = Vec::new();
    let mut feasible = 0u32;
    let mut best: Option<(u32, u64, EvalResult)> = None;
    for k in k_lo..=k_hi {
        let size = match model {
            Model::A => budget.target_en.floor() as u64,
            Model::B | Model::C => match select_c(model, k, p, budget) {
                Ok(c) => c,
                Err(e @ Error::InfeasibleDesign(_)) => {
                    skipped.push(SkippedK { k, reason: e.to_string() });
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        let design = Design::new(model, k, size)?;
        let family = match family_for(k, size) {
            Ok(f) => f,
            Err(e @ (Error::DegenerateEstimator(_) | Error::InfeasibleDesign(_))) => {
                skipped.push(SkippedK { k, reason: e.to_string() });
                continue;
            }
            Err(e) => return Err(e),
        };
        if let Err(e @ Error::DegenerateEstimator(_)) = family.validate(&design) {
            skipped.push(SkippedK { k, reason: e.to_string() });
            continue;
        }
        let result = evaluate(&family, &design, p, epsilon)?;
        feasible += 1;
        let better = match &best {
            None => true,
            Some((_, _, incumbent)) => result.mse < incumbent.mse,
        };
        if better {
            best = Some((k, size, result));
        }
    }
    match best {
        Some((k_star, c_star, result)) => Ok(SearchOutcome {
            k_star,
            c_star,
            result,
            feasible_k_count: feasible,
            skipped_k: skipped,
        }),
        None => Err(Error::InfeasibleDesign(format!(
            "no feasible pool size in [{k_lo}, {k_hi}] for model {} at p={p} within budget {}",
            model.label(),
            budget.target_en
        ))),
    }
}

/// Which shrinkage family to tune.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtFamilyKind {
    /// Multiplicative factor α only.
    Alpha,
    /// Additive offset β only.
    Beta,
    /// Both parameters.
    C,
}

impl PtFamilyKind {
    pub fn parse(s: &str) -> Result<PtFamilyKind> {
        match s {
            "alpha" => Ok(PtFamilyKind::Alpha),
            "beta" => Ok(PtFamilyKind::Beta),
            "c" => Ok(PtFamilyKind::C),
            other => Err(Error::InvalidInput(format!(
                "unknown shrinkage family '{other}' (expected one of: alpha, beta, c)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PtFamilyKind::Alpha => "alpha",
            PtFamilyKind::Beta => "beta",
            PtFamilyKind::C => "c",
        }
    }

    /// Build the estimator this kind describes from tuned parameters.
    pub fn family(&self, alpha: f64, beta: f64) -> Family {
        match self {
            PtFamilyKind::Alpha => Family::PtAlpha { alpha },
            PtFamilyKind::Beta => Family::PtBeta { beta },
            PtFamilyKind::C => Family::PtC { alpha, beta },
        }
    }
}

/// Tuned shrinkage parameters and the exact MSE they reach at p0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PtParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub achieved_mse: f64,
    pub p0: f64,
}

/// Parameter search box: α ∈ [0,1], β ∈ [1, BETA_CAP].
///
/// Unbounded β drives the estimator toward the constant 0, so the
/// refinement needs a compact box; 50 is generous for every tabulated
/// configuration (boundary solutions are reported as such).
pub const BETA_CAP: f64 = 50.0;

const STAGES: usize = 3;
const POINTS_PER_AXIS: usize = 51;

/// Longest ε-truncated pmf support [`optimize_pt`] will tune over.
///
/// The refinement evaluates ~7 800 parameter points and each one re-scans
/// the full truncated outcome law at p0, so tuning cost is proportional to
/// that law's support length. Budgeted designs probed near a sensible p0
/// keep the support in the hundreds; pairings that probe a design far from
/// its intended prevalence range (so the stopping event is vanishingly rare
/// at p0) can push it into the billions. This cap keeps a single tuning
/// call to seconds and turns those pathologies into a reported
/// [`Error::InfeasibleDesign`] instead of an hours-long scan.
pub const PT_TUNING_MAX_SUPPORT: u64 = 250_000;

/// Crude support overestimate (mean + 50 sd of the count law) above which
/// [`optimize_pt`] refuses without walking the pmf at all. Set far enough
/// past [`PT_TUNING_MAX_SUPPORT`] that anything under it can be bounded
/// exactly by a short walk, while astronomically long tails (where even the
/// bounding walk would take minutes) are rejected in O(1).
const PT_TUNING_PREFILTER: f64 = 4_000_000.0;

/// Minimize the exact MSE at p = p0 over the shrinkage-parameter box by a
/// deterministic coarse-to-fine grid refinement: 3 stages of 51 points per
/// axis, each stage zooming into the ±1-cell neighborhood of the incumbent.
/// Exact ties prefer smaller β, then larger α.
///
/// Fails with [`Error::InfeasibleDesign`] when the outcome law at p0 needs
/// more than [`PT_TUNING_MAX_SUPPORT`] pmf terms, which happens when the
/// design's stopping event is too rare at p0 to tune against.
pub fn optimize_pt(
    kind: PtFamilyKind,
    model: Model,
    k: u32,
    c: u64,
    p0: f64,
    epsilon: f64,
) -> Result<PtParams> {
    if model == Model::A {
        return Err(Error::InvalidInput(
            "shrinkage estimators are defined for the sequential models b and c only".into(),
        ));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidInput(format!(
            "prior upper bound p0 must lie strictly between 0 and 1, got {p0}"
        )));
    }
    let design = Design::new(model, k, c)?;
    // Refuse pairings whose outcome law at p0 is too long-tailed to scan.
    // First a closed-form overestimate (no pmf walk) catches the
    // astronomical cases, then an exact truncation bound (a walk of at most
    // a few million cheap terms, given the prefilter passed) enforces the
    // real cap.
    let stop_prob = match model {
        Model::B => design.success_prob(p0),
        Model::C => 1.0 - design.success_prob(p0),
        Model::A => unreachable!("model a rejected above"),
    };
    let count_mean = c as f64 * (1.0 - stop_prob) / stop_prob;
    let count_sd = (c as f64 * (1.0 - stop_prob)).sqrt() / stop_prob;
    let crude_support = count_mean + 50.0 * count_sd + 50.0;
    if crude_support > PT_TUNING_PREFILTER {
        return Err(Error::InfeasibleDesign(format!(
            "tuning at p0={p0} would scan a pmf support of roughly {crude_support:.1e} outcomes \
             (cap {PT_TUNING_MAX_SUPPORT}): the stopping event is too rare at this p0"
        )));
    }
    let support = OutcomeDistribution::for_design(&design, p0)?.truncation_bound(epsilon)?;
    if support > PT_TUNING_MAX_SUPPORT {
        return Err(Error::InfeasibleDesign(format!(
            "tuning at p0={p0} would scan a pmf support of {support} outcomes \
             (cap {PT_TUNING_MAX_SUPPORT}): the stopping event is too rare at this p0"
        )));
    }
    let (weights, _) = collect_weights(&design, p0, epsilon)?;
    let mse_of = |family: Family| -> f64 {
        let mut acc = Neumaier::new();
        for (count, &w) in weights.iter().enumerate() {
            let v = clamp(raw_value(&family, &design, count as u64)).value;
            let d = v - p0;
            acc.add(w * (d * d));
        }
        acc.value()
    };
    Ok(match kind {
        PtFamilyKind::Alpha => {
            let (alpha, mse) =
                refine_1d((0.0, 1.0), ScanOrder::Descending, |a| mse_of(Family::PtAlpha { alpha: a }));
            PtParams { alpha: Some(alpha), beta: None, achieved_mse: mse, p0 }
        }
        PtFamilyKind::Beta => {
            let (beta, mse) =
                refine_1d((1.0, BETA_CAP), ScanOrder::Ascending, |b| mse_of(Family::PtBeta { beta: b }));
            PtParams { alpha: None, beta: Some(beta), achieved_mse: mse, p0 }
        }
        PtFamilyKind::C => {
            let (alpha, beta, mse) = refine_2d((0.0, 1.0), (1.0, BETA_CAP), |a, b| {
                mse_of(Family::PtC { alpha: a, beta: b })
            });
            PtParams { alpha: Some(alpha), beta: Some(beta), achieved_mse: mse, p0 }
        }
    })
}

#[derive(Clone, Copy, PartialEq)]
enum ScanOrder {
    /// Low to high: first (smallest) value wins exact ties.
    Ascending,
    /// High to low: last (smallest) value... the first scanned, i.e. the
    /// largest, wins exact ties.
    Descending,
}

fn axis_point(lo: f64, hi: f64, i: usize) -> f64 {
    lo + (hi - lo) * (i as f64 / (POINTS_PER_AXIS - 1) as f64)
}

fn refine_1d(
    bounds: (f64, f64),
    order: ScanOrder,
    mut f: impl FnMut(f64) -> f64,
) -> (f64, f64) {
    let (mut lo, mut hi) = bounds;
    let mut best = (lo, f64::INFINITY);
    for _ in 0..STAGES {
        let step = (hi - lo) / (POINTS_PER_AXIS - 1) as f64;
        best = (lo, f64::INFINITY);
        let indices: Vec<usize> = match order {
            ScanOrder::Ascending => (0..POINTS_PER_AXIS).collect(),
            ScanOrder::Descending => (0..POINTS_PER_AXIS).rev().collect(),
        };
        for i in indices {
            let x = axis_point(lo, hi, i);
            let fx = f(x);
            if fx < best.1 {
                best = (x, fx);
            }
        }
        lo = (best.0 - step).max(bounds.0);
        hi = (best.0 + step).min(bounds.1);
    }
    best
}

fn refine_2d(
    alpha_bounds: (f64, f64),
    beta_bounds: (f64, f64),
    mut f: impl FnMut(f64, f64) -> f64,
) -> (f64, f64, f64) {
    let (mut alo, mut ahi) = alpha_bounds;
    let (mut blo, mut bhi) = beta_bounds;
    let mut best = (alo, blo, f64::INFINITY);
    for _ in 0..STAGES {
        let astep = (ahi - alo) / (POINTS_PER_AXIS - 1) as f64;
        let bstep = (bhi - blo) / (POINTS_PER_AXIS - 1) as f64;
        best = (alo, blo, f64::INFINITY);
        // β ascending outside, α descending inside: under strict-improvement
        // acceptance, exact ties resolve to smaller β, then larger α.
        for bi in 0..POINTS_PER_AXIS {
            let beta = axis_point(blo, bhi, bi);
            for ai in (0..POINTS_PER_AXIS).rev() {
                let alpha = axis_point(alo, ahi, ai);
                let fx = f(alpha, beta);
                if fx < best.2 {
                    best = (alpha, beta, fx);
                }
            }
        }
        alo = (best.0 - astep).max(alpha_bounds.0);
        ahi = (best.0 + astep).min(alpha_bounds.1);
        blo = (best.1 - bstep).max(beta_bounds.0);
        bhi = (best.1 + bstep).min(beta_bounds.1);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::evaluate;

    #[test]
    fn singleton_range_is_forced() {
        let budget = Budget::new(25.0).unwrap();
        let out = best_k(&Family::Mle, Model::A, 0.1, &budget, (2, 2), 1e-6).unwrap();
        assert_eq!(out.k_star, 2);
        assert_eq!(out.c_star, 25); // n = floor(25)
        assert_eq!(out.feasible_k_count, 1);
    }

    #[test]
    fn minimizer_survives_an_exhaustive_rescan() {
        let budget = Budget::new(25.0).unwrap();
        for (family, model) in [
            (Family::Mle, Model::A),
            (Family::Mle, Model::B),
            (Family::Burrows, Model::C),
            (Family::Degroot, Model::C),
        ] {
            let out = best_k(&family, model, 0.1, &budget, DEFAULT_K_RANGE, 1e-6).unwrap();
            for k in 2..=50u32 {
                let size = match model {
                    Model::A => 25,
                    _ => match select_c(model, k, 0.1, &budget) {
                        Ok(c) => c,
                        Err(_) => continue,
                    },
                };
                let d = Design::new(model, k, size).unwrap();
                let r = evaluate(&family, &d, 0.1, 1e-6).unwrap();
                assert!(
                    r.mse >= out.result.mse,
                    "{family:?}/{model:?}: k={k} beats reported k_star={}",
                    out.k_star
                );
                if r.mse == out.result.mse {
                    assert!(out.k_star <= k, "tie must resolve to the smallest k");
                }
            }
        }
    }

    #[test]
    fn infeasible_pool_sizes_are_recorded_not_dropped() {
        let budget = Budget::new(25.0).unwrap();
        // p=0.1, model b: small k cannot reach even c=1 within 25 tests.
        let out = best_k(&Family::Mle, Model::B, 0.012, &budget, (2, 50), 1e-6).unwrap();
        assert!(!out.skipped_k.is_empty());
        let ks: Vec<u32> = out.skipped_k.iter().map(|s| s.k).collect();
        assert!(ks.contains(&2));
        assert!(out.feasible_k_count as usize + out.skipped_k.len() == 49);
    }

    #[test]
    fn degenerate_corrected_rows_skip_single_stop_designs() {
        let budget = Budget::new(25.0).unwrap();
        // At p=0.012 under model b the smallest pool sizes are infeasible
        // (even c=1 overruns the budget) and the next few force c=1, where
        // the corrected estimator is identically zero; both kinds must land
        // in skipped_k with their reasons, not crash or win.
        let out = best_k(&Family::Burrows, Model::B, 0.012, &budget, (2, 50), 1e-6).unwrap();
        assert!(out.skipped_k.iter().any(|s| s.reason.contains("degenerate")));
        assert!(out.skipped_k.iter().any(|s| s.reason.contains("infeasible")));
        assert!(out.k_star >= 7);
    }

    #[test]
    fn all_infeasible_is_an_error() {
        let budget = Budget::new(5.0).unwrap();
        let err = best_k(&Family::Mle, Model::B, 0.001, &budget, (2, 50), 1e-6).unwrap_err();
        assert_eq!(err.code(), "INFEASIBLE_DESIGN");
    }

    #[test]
    fn shrinkage_optimum_beats_the_mle_it_contains() {
        // α = 1 is in the feasible set, so the tuned α-family can only
        // improve on the MLE's exact MSE at p0.
        let design = Design::new(Model::B, 5, 4).unwrap();
        let tuned = optimize_pt(PtFamilyKind::Alpha, Model::B, 5, 4, 0.1, 1e-6).unwrap();
        let mle = evaluate(&Family::Mle, &design, 0.1, 1e-6).unwrap();
        assert!(tuned.achieved_mse <= mle.mse + 1e-15);
        let a = tuned.alpha.unwrap();
        assert!((0.0..=1.0).contains(&a));
        assert!(tuned.beta.is_none());
    }

    #[test]
    fn refinement_matches_a_dense_scan() {
        // One-dimensional: 501-point dense scan oracle.
        let dense = |mut f: Box<dyn FnMut(f64) -> f64>| -> (f64, f64) {
            let mut best = (1.0, f64::INFINITY);
            for i in 0..=500 {
                let b = 1.0 + (BETA_CAP - 1.0) * i as f64 / 500.0;
                let fb = f(b);
                if fb < best.1 {
                    best = (b, fb);
                }
            }
            best
        };
        let design = Design::new(Model::C, 3, 2).unwrap();
        let (weights, _) = collect_weights(&design, 0.3, 1e-6).unwrap();
        let mse_of = |beta: f64| -> f64 {
            let fam = Family::PtBeta { beta };
            let mut acc = 0.0;
            for (z, &w) in weights.iter().enumerate() {
                let v = clamp(raw_value(&fam, &design, z as u64)).value;
                acc += w * (v - 0.3) * (v - 0.3);
            }
            acc
        };
        let refined = optimize_pt(PtFamilyKind::Beta, Model::C, 3, 2, 0.3, 1e-6).unwrap();
        let (_, dense_mse) = dense(Box::new(mse_of));
        assert!(
            (refined.achieved_mse - dense_mse).abs() <= 1e-6,
            "refined {} vs dense {}",
            refined.achieved_mse,
            dense_mse
        );

        // Two-dimensional small case against a 501×501 dense scan.
        let design2 = Design::new(Model::C, 3, 2).unwrap();
        let (w2, _) = collect_weights(&design2, 0.25, 1e-6).unwrap();
        let mse2 = |alpha: f64, beta: f64| -> f64 {
            let fam = Family::PtC { alpha, beta };
            let mut acc = 0.0;
            for (z, &w) in w2.iter().enumerate() {
                let v = clamp(raw_value(&fam, &design2, z as u64)).value;
                acc += w * (v - 0.25) * (v - 0.25);
            }
            acc
        };
        let mut dense_best = f64::INFINITY;
        for bi in 0..=500 {
            let b = 1.0 + (BETA_CAP - 1.0) * bi as f64 / 500.0;
            for ai in 0..=500 {
                let a = ai as f64 / 500.0;
                let f = mse2(a, b);
                if f < dense_best {
                    dense_best = f;
                }
            }
        }
        let refined2 = optimize_pt(PtFamilyKind::C, Model::C, 3, 2, 0.25, 1e-6).unwrap();
        assert!(
            (refined2.achieved_mse - dense_best).abs() <= 1e-6,
            "refined {} vs dense {}",
            refined2.achieved_mse,
            dense_best
        );
    }

    #[test]
    fn optimization_is_deterministic() {
        let a = optimize_pt(PtFamilyKind::C, Model::B, 4, 3, 0.2, 1e-6).unwrap();
        let b = optimize_pt(PtFamilyKind::C, Model::B, 4, 3, 0.2, 1e-6).unwrap();
        assert_eq!(a.alpha.unwrap().to_bits(), b.alpha.unwrap().to_bits());
        assert_eq!(a.beta.unwrap().to_bits(), b.beta.unwrap().to_bits());
        assert_eq!(a.achieved_mse.to_bits(), b.achieved_mse.to_bits());
    }

    #[test]
    fn tuned_parameters_respect_the_box() {
        let t = optimize_pt(PtFamilyKind::C, Model::B, 2, 5, 0.1, 1e-6).unwrap();
        let alpha = t.alpha.unwrap();
        let beta = t.beta.unwrap();
        assert!((0.0..=1.0).contains(&alpha));
        assert!((1.0..=BETA_CAP).contains(&beta));
    }

    #[test]
    fn overlong_tuning_supports_are_refused() {
        // Stop-on-negatives design probed at p0 = 0.5: negative pools of 30
        // have probability 2^-30, so the count law's mean is ~1.8e10 terms.
        // The closed-form prefilter must refuse without walking the pmf.
        let err = optimize_pt(PtFamilyKind::C, Model::C, 30, 17, 0.5, 1e-6).unwrap_err();
        assert_eq!(err.code(), "INFEASIBLE_DESIGN");
        assert!(err.to_string().contains("roughly"), "got: {err}");

        // A milder case (mean ~1.8e5, bound ~3.6e5) passes the prefilter but
        // must still be caught by the exact truncation bound.
        let err = optimize_pt(PtFamilyKind::C, Model::C, 13, 22, 0.5, 1e-6).unwrap_err();
        assert_eq!(err.code(), "INFEASIBLE_DESIGN");
        let msg = err.to_string();
        assert!(
            msg.contains("cap 250000") && !msg.contains("roughly"),
            "expected the exact-bound message, got: {msg}"
        );
    }

    #[test]
    fn pool_scan_records_untunable_designs_and_moves_on() {
        // A per-design tuner that declares every k >= 8 untunable must not
        // abort the scan; those pool sizes land in skipped_k with reasons
        // and the winner comes from the remaining candidates.
        let budget = Budget::new(25.0).unwrap();
        let out = best_k_with(Model::C, 0.1, &budget, (2, 10), 1e-6, |k, _c| {
            if k >= 8 {
                Err(Error::InfeasibleDesign(format!("tuning refused for k={k}")))
            } else {
                Ok(Family::Mle)
            }
        })
        .unwrap();
        assert!(out.k_star < 8, "k_star={} should predate the refusals", out.k_star);
        let refused: Vec<u32> = out
            .skipped_k
            .iter()
            .filter(|s| s.reason.contains("tuning refused"))
            .map(|s| s.k)
            .collect();
        assert_eq!(refused, vec![8, 9, 10]);
        assert_eq!(out.feasible_k_count, 6);
    }
}

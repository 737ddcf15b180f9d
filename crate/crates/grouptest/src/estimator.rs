//! Every point estimator of the prevalence `p` from one observed pooled
//! count, as a pure map from the sufficient statistic to an estimate.
//!
//! Families:
//!
//! * `Mle` — maximum likelihood under each plan.
//! * `Burrows` — small-sample corrected variant removing the leading bias
//!   term, built around the constant ν = (k−1)/(2k).
//! * `PtAlpha`/`PtBeta`/`PtC` — shrinkage estimators for the sequential
//!   plans: a multiplicative factor α ∈ [0,1], an additive offset β ≥ 1, or
//!   both combined. Their parameters are usually tuned for a prior upper
//!   bound p0 (see [`crate::search::optimize_pt`]).
//! * `Gart` — plug-in correction subtracting the large-sample bias of the
//!   MLE evaluated at the MLE itself.
//! * `Degroot` — the unbiased estimator available under plan `c` only.
//!
//! All raw values are clamped to [0,1]; clamping is reported so evaluation
//! can count it (only the Gart plug-in can actually stray outside).

use serde::Serialize;

use crate::accum::Neumaier;
use crate::design::{Design, Model};
use crate::error::{Error, Result};

/// One estimation rule with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Mle,
    Burrows,
    /// Shrink the MLE's success-fraction by a factor `alpha` ∈ [0,1].
    PtAlpha { alpha: f64 },
    /// Replace the success fraction by (c+1)/(count+c+β), β ≥ 1.
    PtBeta { beta: f64 },
    /// Both knobs combined.
    PtC { alpha: f64, beta: f64 },
    Gart,
    Degroot,
}

impl Family {
    /// Short name used in CLI flags, JSON records, and CSV rows.
    pub fn name(&self) -> &'static str {
        match self {
            Family::Mle => "mle",
            Family::Burrows => "burrows",
            Family::PtAlpha { .. } => "pt_alpha",
            Family::PtBeta { .. } => "pt_beta",
            Family::PtC { .. } => "pt_c",
            Family::Gart => "gart",
            Family::Degroot => "degroot",
        }
    }

    /// The shrinkage parameters, when the family has them.
    pub fn pt_params(&self) -> (Option<f64>, Option<f64>) {
        match *self {
            Family::PtAlpha { alpha } => (Some(alpha), None),
            Family::PtBeta { beta } => (None, Some(beta)),
            Family::PtC { alpha, beta } => (Some(alpha), Some(beta)),
            _ => (None, None),
        }
    }

    /// Check that this family is defined for `design` and that its
    /// parameters are in range.
    pub fn validate(&self, design: &Design) -> Result<()> {
        match self {
            Family::Mle => Ok(()),
            Family::Burrows => {
                if design.model == Model::B && design.size == 1 {
                    Err(Error::DegenerateEstimator(
                        "the corrected estimator under model b is identically zero at c=1".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            Family::PtAlpha { alpha } => {
                require_sequential(self, design)?;
                check_alpha(*alpha)
            }
            Family::PtBeta { beta } => {
                require_sequential(self, design)?;
                check_beta(*beta)
            }
            Family::PtC { alpha, beta } => {
                require_sequential(self, design)?;
                check_alpha(*alpha)?;
                check_beta(*beta)
            }
            Family::Gart => require_sequential(self, design),
            Family::Degroot => {
                if design.model != Model::C {
                    Err(Error::InvalidInput(
                        "the degroot estimator exists only under model c (stop on negatives)"
                            .into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn require_sequential(family: &Family, design: &Design) -> Result<()> {
    if design.model == Model::A {
        return Err(Error::InvalidInput(format!(
            "estimator '{}' is defined for the sequential models b and c only",
            family.name()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!(
            "alpha must lie in [0,1], got {alpha}"
        )));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 1.0 {
        return Err(Error::InvalidInput(format!(
            "beta must be a finite number >= 1, got {beta}"
        )));
    }
    Ok(())
}

/// A clamped point estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    /// Estimate of p, in [0,1].
    pub value: f64,
    /// Whether the raw value fell outside [0,1] before clamping.
    pub clamped: bool,
}

/// Point estimate for one observed count under `design`.
///
/// `count` is x (positive pools) under model `a`, y (negative pools) under
/// model `b`, and z (positive pools) under model `c`.
pub fn estimate(family: &Family, design: &Design, count: u64) -> Result<Estimate> {
    family.validate(design)?;
    if design.model == Model::A && count > design.size {
        return Err(Error::InvalidInput(format!(
            "count {count} outside the support 0..={}",
            design.size
        )));
    }
    let raw = raw_value(family, design, count);
    Ok(clamp(raw))
}

pub(crate) fn clamp(raw: f64) -> Estimate {
    if raw < 0.0 {
        Estimate { value: 0.0, clamped: true }
    } else if raw > 1.0 {
        Estimate { value: 1.0, clamped: true }
    } else {
        // `+ 0.0` canonicalizes −0.0 (reachable through log-form algebra)
        // to +0.0 so equal estimates are also identical.
        Estimate { value: raw + 0.0, clamped: false }
    }
}

/// The small-sample correction constant ν = (k−1)/(2k).
fn correction_nu(k: u32) -> f64 {
    (k as f64 - 1.0) / (2.0 * k as f64)
}

/// 1 − base^{1/k} evaluated as −expm1(ln(base)/k); `ln_base` is ln(base).
/// Accurate both for base near 1 (estimate near 0) and base near 0.
#[inline]
fn one_minus_root(inv_k: f64, ln_base: f64) -> f64 {
    -f64::exp_m1(inv_k * ln_base)
}

/// Unclamped estimator value. Inputs are assumed validated.
pub(crate) fn raw_value(family: &Family, design: &Design, count: u64) -> f64 {
    let k = design.k;
    let inv_k = 1.0 / k as f64;
    let size = design.size as f64;
    let j = count as f64;
    match design.model {
        Model::A => {
            let n = size;
            match family {
                Family::Mle => one_minus_root(inv_k, f64::ln_1p(-(j / n))),
                Family::Burrows => {
                    one_minus_root(inv_k, f64::ln_1p(-(j / (n + correction_nu(k)))))
                }
                _ => unreachable!("validated: family undefined under model a"),
            }
        }
        Model::B => {
            let c = size;
            let y = j;
            match family {
                // 1 − (y/(y+c))^{1/k} with y/(y+c) written as 1 − c/(y+c).
                Family::Mle => one_minus_root(inv_k, f64::ln_1p(-(c / (y + c)))),
                Family::PtAlpha { alpha } => {
                    one_minus_root(inv_k, f64::ln_1p(-(alpha * (c / (y + c)))))
                }
                Family::PtBeta { beta } => {
                    one_minus_root(inv_k, f64::ln_1p(-((c + 1.0) / (y + c + beta))))
                }
                Family::PtC { alpha, beta } => {
                    one_minus_root(inv_k, f64::ln_1p(-(alpha * ((c + 1.0) / (y + c + beta)))))
                }
                // 1 − ((y+ν)/(y+c+ν−1))^{1/k}; the base is 1 − (c−1)/(y+c+ν−1).
                Family::Burrows => {
                    let nu = correction_nu(k);
                    one_minus_root(inv_k, f64::ln_1p(-((c - 1.0) / (y + c + nu - 1.0))))
                }
                Family::Gart => {
                    if count == 0 {
                        gart_zero_value(Model::B, k, design.size).expect("validated inputs")
                    } else {
                        let ph = one_minus_root(inv_k, f64::ln_1p(-(c / (y + c))));
                        ph - gart_bias(Model::B, ph, k, design.size).expect("interior mle value")
                    }
                }
                Family::Degroot => unreachable!("validated: degroot needs model c"),
            }
        }
        Model::C => {
            let c = size;
            let z = j;
            match family {
                // 1 − (c/(z+c))^{1/k}; ln of the base is −ln(1 + z/c).
                Family::Mle => one_minus_root(inv_k, -f64::ln_1p(z / c)),
                Family::PtAlpha { alpha } => {
                    one_minus_root(inv_k, alpha.ln() - f64::ln_1p(z / c))
                }
                Family::PtBeta { beta } => {
                    one_minus_root(inv_k, ((c + 1.0) / (z + c + beta)).ln())
                }
                Family::PtC { alpha, beta } => {
                    one_minus_root(inv_k, (alpha * ((c + 1.0) / (z + c + beta))).ln())
                }
                // 1 − ((c+ν−1)/(z+c+ν−1))^{1/k}.
                Family::Burrows => {
                    let nu = correction_nu(k);
                    one_minus_root(inv_k, f64::ln_1p(-(z / (z + c + nu - 1.0))))
                }
                Family::Gart => {
                    if count == 0 {
                        0.0
                    } else {
                        let ph = one_minus_root(inv_k, -f64::ln_1p(z / c));
                        ph - gart_bias(Model::C, ph, k, design.size).expect("interior mle value")
                    }
                }
                Family::Degroot => degroot_value(design.size, k, count),
            }
        }
    }
}

/// The three ingredients of the large-sample MLE bias under the sequential
/// plans: Fisher information I(p), its derivative dI/dp, and the expectation
/// of the third log-likelihood derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GartComponents {
    pub info: f64,
    pub info_deriv: f64,
    pub third_deriv_expect: f64,
}

/// Closed forms of the bias ingredients for models `b` and `c`.
pub fn gart_components(model: Model, p: f64, k: u32, c: u64) -> Result<GartComponents> {
    if model == Model::A {
        return Err(Error::InvalidInput(
            "bias components are defined for the sequential models b and c only".into(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "bias components are singular outside p in (0,1), got {p}"
        )));
    }
    let q = 1.0 - p;
    let th = -f64::exp_m1(k as f64 * f64::ln_1p(-p));
    let kf = k as f64;
    let cf = c as f64;
    let qp = |e: i64| q.powi(e as i32);
    let ki = k as i64;
    Ok(match model {
        Model::B => {
            let info = cf * kf * kf * qp(ki - 2) / (th * th);
            let info_deriv = -cf * kf * kf * ((kf - 2.0) * qp(ki - 3) + (kf + 2.0) * qp(2 * ki - 3))
                / (th * th * th);
            let s = kf * qp(ki) + qp(ki) - 1.0;
            let third_deriv_expect = (cf * kf / qp(3))
                * ((kf * (kf + 1.0) * qp(ki) * th + 2.0 * s * s) / (th * th * th) - 2.0 / th);
            GartComponents { info, info_deriv, third_deriv_expect }
        }
        Model::C => {
            let info = cf * kf * kf / (q * q * th);
            let info_deriv = cf * kf * kf * (2.0 - (2.0 + kf) * qp(ki)) / (qp(3) * th * th);
            let third_deriv_expect = (kf * cf / qp(3))
                * (2.0 * kf * kf * qp(2 * ki) / (th * th)
                    + 3.0 * kf * (kf - 1.0) * qp(ki) / th
                    + kf * (kf - 3.0));
            GartComponents { info, info_deriv, third_deriv_expect }
        }
        Model::A => unreachable!(),
    })
}

/// Large-sample bias of the MLE, B(p) = −(2·dI/dp + E[ℓ''']) / (2 I(p)²).
pub fn gart_bias(model: Model, p: f64, k: u32, c: u64) -> Result<f64> {
    let parts = gart_components(model, p, k, c)?;
    Ok(-(2.0 * parts.info_deriv + parts.third_deriv_expect) / (2.0 * parts.info * parts.info))
}

/// Value the Gart estimator takes at the boundary count 0, where the MLE
/// sits on the edge of [0,1] and the plug-in correction is singular.
///
/// Model b (y = 0, all pools positive): 1 − ((k−1)/(2kc+k−1))^{1/k}.
/// Model c (z = 0, no positives): 0.
pub fn gart_zero_value(model: Model, k: u32, c: u64) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidInput("pool size k must be at least 2".into()));
    }
    match model {
        Model::B => {
            let kf = k as f64;
            let cf = c as f64;
            let base = (kf - 1.0) / (2.0 * kf * cf + kf - 1.0);
            Ok(one_minus_root(1.0 / kf, base.ln()))
        }
        Model::C => Ok(0.0),
        Model::A => Err(Error::InvalidInput(
            "the boundary value is defined for the sequential models b and c only".into(),
        )),
    }
}

/// Fresh evaluation of the Degroot estimator at count `z`:
/// 0 at z = 0, else 1 − Π_{j=1}^{z} (j + c − 1 − 1/k)/(j + c − 1).
///
/// The product is accumulated as a compensated sum of log terms: no
/// underflow drift for long products, and the term-by-term arithmetic is
/// identical to [`DegrootRunning`]'s, so fresh and incremental evaluation
/// agree exactly. (The product also equals
/// Γ(z+c−1/k)Γ(c) / (Γ(c−1/k)Γ(z+c)), used as a cross-check in tests.)
pub fn degroot_value(c: u64, k: u32, z: u64) -> f64 {
    if z == 0 {
        return 0.0;
    }
    let inv_k = 1.0 / k as f64;
    let cf = c as f64;
    let mut ln_prod = Neumaier::new();
    for j in 1..=z {
        let d = j as f64 + cf - 1.0;
        ln_prod.add(f64::ln_1p(-inv_k / d));
    }
    -f64::exp_m1(ln_prod.value())
}

/// Incremental Degroot evaluation along a support walk z = 0, 1, 2, …
///
/// Each step extends the running log-product by one term, so evaluating the
/// whole (possibly tens of millions long) truncated support costs O(1) per
/// point instead of O(z).
#[derive(Debug, Clone)]
pub struct DegrootRunning {
    cf: f64,
    inv_k: f64,
    next: u64,
    ln_prod: Neumaier,
}

impl DegrootRunning {
    pub fn new(c: u64, k: u32) -> Self {
        DegrootRunning { cf: c as f64, inv_k: 1.0 / k as f64, next: 0, ln_prod: Neumaier::new() }
    }

    /// Value at `z`; `z` must advance by exactly one per call starting at 0.
    #[inline]
    pub fn step(&mut self, z: u64) -> f64 {
        debug_assert_eq!(z, self.next);
        self.next += 1;
        if z == 0 {
            return 0.0;
        }
        let d = z as f64 + self.cf - 1.0;
        self.ln_prod.add(f64::ln_1p(-self.inv_k / d));
        -f64::exp_m1(self.ln_prod.value())
    }
}

/// Per-count evaluator used by the exact-expectation sums: stateless closed
/// forms for most families, an incremental product for Degroot.
pub(crate) enum StreamingEval {
    Closed { family: Family, design: Design },
    Degroot { running: DegrootRunning, c: u64, k: u32 },
}

impl StreamingEval {
    pub fn new(family: &Family, design: &Design) -> StreamingEval {
        match family {
            Family::Degroot => StreamingEval::Degroot {
                running: DegrootRunning::new(design.size, design.k),
                c: design.size,
                k: design.k,
            },
            _ => StreamingEval::Closed { family: *family, design: *design },
        }
    }

    /// Unclamped value at `count`. Counts must be visited in increasing
    /// order starting from 0 for the incremental path; out-of-order calls
    /// fall back to a fresh evaluation.
    #[inline]
    pub fn raw(&mut self, count: u64) -> f64 {
        match self {
            StreamingEval::Closed { family, design } => raw_value(family, design, count),
            StreamingEval::Degroot { running, c, k } => {
                if count == running.next {
                    running.step(count)
                } else {
                    degroot_value(*c, *k, count)
                }
            }
        }
    }
}

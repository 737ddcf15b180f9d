//! Outcome distributions of the three pooled sampling plans: numerically
//! stable pmfs and tail-truncation bounds.
//!
//! A pooled test is Bernoulli(θ). The observed count is then
//!
//! * `FixedBinomial(n)` — Binomial(n, θ): positive pools out of n;
//! * `NegBinPositives(c)` — negative binomial: negative pools seen before the
//!   c-th positive, P(y) = C(c+y−1, y) θ^c (1−θ)^y;
//! * `NegBinNegatives(c)` — positive pools seen before the c-th negative,
//!   P(z) = C(c+z−1, z) (1−θ)^c θ^z.
//!
//! All pmfs are computed through log-gamma so large counts and stopping
//! parameters neither overflow nor lose mass. The unbounded supports are
//! truncated at the smallest ν with P(count > ν) ≤ ε, found by forward
//! accumulation from zero with compensated summation.

use statrs::function::gamma::ln_gamma;

use crate::accum::Neumaier;
use crate::design::{Design, Model};
use crate::error::{Error, Result};

/// Refresh the multiplicative pmf recurrence from the closed form this often,
/// so rounding drift over very long supports stays below ~1e−13.
const REFRESH_EVERY: u64 = 4096;

/// Hard cap on support walk length; hitting it means the requested tail is
/// unreachable in sensible time (θ pathologically close to a boundary).
const MAX_TERMS: u64 = 2_000_000_000;

/// Smallest admissible truncation tolerance. Below ~1e−12 the accumulated
/// mass can no longer be distinguished from 1 in double precision.
pub const MIN_EPSILON: f64 = 1e-12;

/// Which of the three outcome laws a distribution follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    FixedBinomial { n: u64 },
    NegBinPositives { c: u64 },
    NegBinNegatives { c: u64 },
}

/// Outcome distribution of one design at one prevalence.
#[derive(Debug, Clone)]
pub struct OutcomeDistribution {
    kind: Kind,
    theta: f64,
    // Cached logs for the closed-form pmf: ln θ, ln(1−θ), ln Γ(size).
    ln_theta: f64,
    ln_comp: f64,
    ln_gamma_size: f64,
}

/// Where a truncated support walk stopped and how much mass lies beyond it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncation {
    /// Last support point included in the sum.
    pub bound: u64,
    /// Upper mass P(count > bound) as measured by the accumulated sum.
    pub tail_mass: f64,
}

impl OutcomeDistribution {
    pub fn new(kind: Kind, theta: f64) -> Result<OutcomeDistribution> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!(
                "pool success probability must lie in [0,1], got {theta}"
            )));
        }
        let size = match kind {
            Kind::FixedBinomial { n } => n,
            Kind::NegBinPositives { c } | Kind::NegBinNegatives { c } => c,
        };
        if size < 1 {
            return Err(Error::InvalidInput(
                "distribution size parameter must be at least 1".into(),
            ));
        }
        Ok(OutcomeDistribution {
            kind,
            theta,
            ln_theta: theta.ln(),
            ln_comp: f64::ln_1p(-theta),
            ln_gamma_size: ln_gamma(size as f64),
        })
    }

    /// The outcome distribution induced by `design` at prevalence `p`.
    pub fn for_design(design: &Design, p: f64) -> Result<OutcomeDistribution> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "prevalence p must lie in [0,1], got {p}"
            )));
        }
        let kind = match design.model {
            Model::A => Kind::FixedBinomial { n: design.size },
            Model::B => Kind::NegBinPositives { c: design.size },
            Model::C => Kind::NegBinNegatives { c: design.size },
        };
        OutcomeDistribution::new(kind, design.success_prob(p))
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Upper end of the support, if finite.
    pub fn support_max(&self) -> Option<u64> {
        match self.kind {
            Kind::FixedBinomial { n } => Some(n),
            _ => None,
        }
    }

    /// Exact pmf at `count`, via log-gamma. Degenerate θ values yield the
    /// appropriate point mass instead of NaN.
    pub fn pmf(&self, count: u64) -> Result<f64> {
        match self.kind {
            Kind::FixedBinomial { n } => {
                if count > n {
                    return Err(Error::InvalidInput(format!(
                        "count {count} outside the support 0..={n}"
                    )));
                }
                if self.theta == 0.0 {
                    return Ok(if count == 0 { 1.0 } else { 0.0 });
                }
                if self.theta == 1.0 {
                    return Ok(if count == n { 1.0 } else { 0.0 });
                }
            }
            Kind::NegBinPositives { .. } => {
                // θ=1: every pool positive, so zero negatives are ever seen.
                if self.theta == 1.0 {
                    return Ok(if count == 0 { 1.0 } else { 0.0 });
                }
                if self.theta == 0.0 {
                    return Ok(0.0); // sampling never stops
                }
            }
            Kind::NegBinNegatives { .. } => {
                if self.theta == 0.0 {
                    return Ok(if count == 0 { 1.0 } else { 0.0 });
                }
                if self.theta == 1.0 {
                    return Ok(0.0);
                }
            }
        }
        Ok(self.ln_pmf_interior(count).exp())
    }

    /// Closed-form log-pmf; assumes θ strictly inside (0,1) and `count`
    /// inside the support.
    fn ln_pmf_interior(&self, count: u64) -> f64 {
        let j = count as f64;
        match self.kind {
            Kind::FixedBinomial { n } => {
                let n = n as f64;
                ln_gamma(n + 1.0) - ln_gamma(j + 1.0) - ln_gamma(n - j + 1.0)
                    + j * self.ln_theta
                    + (n - j) * self.ln_comp
            }
            Kind::NegBinPositives { c } => {
                let c = c as f64;
                ln_gamma(c + j) - ln_gamma(j + 1.0) - self.ln_gamma_size
                    + c * self.ln_theta
                    + j * self.ln_comp
            }
            Kind::NegBinNegatives { c } => {
                let c = c as f64;
                ln_gamma(c + j) - ln_gamma(j + 1.0) - self.ln_gamma_size
                    + c * self.ln_comp
                    + j * self.ln_theta
            }
        }
    }

    /// Smallest ν with P(count > ν) ≤ ε, by forward accumulation.
    ///
    /// The finite binomial support needs no truncation and returns `n`; the
    /// negative binomial kinds require θ strictly inside (0,1).
    pub fn truncation_bound(&self, epsilon: f64) -> Result<u64> {
        Ok(self.walk(epsilon, |_, _| ())?.bound)
    }

    /// Stream `(count, weight)` pairs over the ε-truncated support in
    /// increasing count order, returning where the walk stopped.
    ///
    /// The weights are pmf values from a multiplicative recurrence that is
    /// re-anchored to the closed form every few thousand terms, so individual
    /// weights stay within ~1e−13 of exact while each step costs only a few
    /// flops.
    pub fn for_each_weight<F: FnMut(u64, f64)>(&self, epsilon: f64, f: F) -> Result<Truncation> {
        self.walk(epsilon, f)
    }

    fn walk<F: FnMut(u64, f64)>(&self, epsilon: f64, mut f: F) -> Result<Truncation> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "truncation epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if matches!(self.kind, Kind::FixedBinomial { .. }) {
            return self.walk_binomial(f);
        }
        if epsilon < MIN_EPSILON {
            return Err(Error::InvalidInput(format!(
                "truncation epsilon below {MIN_EPSILON:e} is not resolvable in double precision"
            )));
        }
        if self.theta == 0.0 || self.theta == 1.0 {
            return Err(Error::InvalidInput(
                "degenerate distribution: pool success probability is 0 or 1".into(),
            ));
        }
        let c = match self.kind {
            Kind::NegBinPositives { c } | Kind::NegBinNegatives { c } => c as f64,
            Kind::FixedBinomial { .. } => unreachable!(),
        };
        // Per-step factor excluding the (c+j−1)/j ratio.
        let step = match self.kind {
            Kind::NegBinPositives { .. } => 1.0 - self.theta,
            Kind::NegBinNegatives { .. } => self.theta,
            Kind::FixedBinomial { .. } => unreachable!(),
        };
        let mut w = self.ln_pmf_interior(0).exp();
        let mut cum = Neumaier::new();
        let mut j: u64 = 0;
        loop {
            f(j, w);
            cum.add(w);
            let tail = 1.0 - cum.value();
            if tail <= epsilon {
                return Ok(Truncation { bound: j, tail_mass: tail.max(0.0) });
            }
            j += 1;
            if j > MAX_TERMS {
                return Err(Error::InfeasibleDesign(format!(
                    "tail tolerance {epsilon:e} needs more than {MAX_TERMS} pmf terms"
                )));
            }
            if j.is_multiple_of(REFRESH_EVERY) {
                w = self.ln_pmf_interior(j).exp();
            } else {
                w *= step * ((c + j as f64 - 1.0) / j as f64);
                // A left tail below the subnormal range flushes the
                // recurrence to zero, which a product can never recover
                // from; re-anchor until the weights are normal again.
                if !w.is_normal() {
                    w = self.ln_pmf_interior(j).exp();
                }
            }
        }
    }

    fn walk_binomial<F: FnMut(u64, f64)>(&self, mut f: F) -> Result<Truncation> {
        let n = match self.kind {
            Kind::FixedBinomial { n } => n,
            _ => unreachable!(),
        };
        if self.theta == 0.0 {
            f(0, 1.0);
            return Ok(Truncation { bound: n, tail_mass: 0.0 });
        }
        if self.theta == 1.0 {
            f(n, 1.0);
            return Ok(Truncation { bound: n, tail_mass: 0.0 });
        }
        let ratio = self.theta / (1.0 - self.theta);
        let mut w = self.ln_pmf_interior(0).exp();
        for x in 0..=n {
            if x > 0 {
                if x % REFRESH_EVERY == 0 {
                    w = self.ln_pmf_interior(x).exp();
                } else {
                    w *= ratio * ((n - x + 1) as f64 / x as f64);
                    // Recover from left-tail underflow (see the sequential
                    // walk above); P(0) alone can be far below subnormal.
                    if !w.is_normal() {
                        w = self.ln_pmf_interior(x).exp();
                    }
                }
            }
            f(x, w);
        }
        Ok(Truncation { bound: n, tail_mass: 0.0 })
    }
}

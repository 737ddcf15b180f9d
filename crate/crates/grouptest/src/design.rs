//! Sampling-plan definitions, expected-sample-size formulas, and the
//! budgeted stopping-parameter selection rule.
//!
//! Three plans are supported, conventionally labelled `a`, `b`, `c`:
//!
//! * **a** — a fixed number `n` of pools is tested; the observed count is the
//!   number `x` of positive pools.
//! * **b** — pools are tested until the `c`-th positive pool appears; the
//!   observed count is the number `y` of negative pools.
//! * **c** — pools are tested until the `c`-th negative pool appears; the
//!   observed count is the number `z` of positive pools.
//!
//! Every pool contains `k` units; a pool tests positive when at least one of
//! its units is positive, so a single pooled test is Bernoulli with success
//! probability θ = 1 − (1−p)^k.

use serde::Serialize;

use crate::error::{Error, Result};

/// Sampling-plan labels. See the module docs for the three stopping rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Model {
    /// Fixed number of pools.
    #[serde(rename = "a")]
    A,
    /// Stop at the c-th positive pool.
    #[serde(rename = "b")]
    B,
    /// Stop at the c-th negative pool.
    #[serde(rename = "c")]
    C,
}

impl Model {
    /// Lower-case single-letter label used by the CLI and CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Model::A => "a",
            Model::B => "b",
            Model::C => "c",
        }
    }

    /// Parse a CLI label (`a`, `b`, or `c`).
    pub fn parse(s: &str) -> Result<Model> {
        match s {
            "a" | "A" => Ok(Model::A),
            "b" | "B" => Ok(Model::B),
            "c" | "C" => Ok(Model::C),
            other => Err(Error::InvalidInput(format!(
                "unknown model '{other}' (expected one of: a, b, c)"
            ))),
        }
    }
}

/// One concrete sampling plan: a model, its size parameter, and the pool
/// size `k`.
///
/// `size` is the number of pools `n` under model `a` and the stopping count
/// `c` under models `b` and `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Design {
    pub model: Model,
    /// Pool size; at least 2 (pooling is pointless for k = 1 and the
    /// small-sample correction constant (k−1)/(2k) degenerates there).
    pub k: u32,
    /// n (model a) or c (models b, c).
    pub size: u64,
}

impl Design {
    /// Build a validated design. `size` is `n` for model `a` and `c`
    /// otherwise.
    pub fn new(model: Model, k: u32, size: u64) -> Result<Design> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "pool size k must be at least 2, got {k}"
            )));
        }
        if size < 1 {
            let name = if model == Model::A { "n" } else { "c" };
            return Err(Error::InvalidInput(format!("{name} must be at least 1")));
        }
        Ok(Design { model, k, size })
    }

    /// Probability that a single pool of `k` units tests positive,
    /// θ = 1 − (1−p)^k.
    ///
    /// Computed as −expm1(k·ln(1−p)) so that tiny θ (small p) keeps full
    /// relative precision.
    pub fn success_prob(&self, p: f64) -> f64 {
        success_prob(self.k, p)
    }

    /// Expected number of pooled tests at prevalence `p`:
    /// model a → n; model b → c/θ; model c → c/(1−θ).
    ///
    /// Returns +∞ when the stopping event has probability zero (p = 0 under
    /// model b, p = 1 under model c).
    pub fn expected_tests(&self, p: f64) -> f64 {
        match self.model {
            Model::A => self.size as f64,
            Model::B => self.size as f64 / self.success_prob(p),
            Model::C => self.size as f64 / (1.0 - self.success_prob(p)),
        }
    }
}

/// θ = 1 − (1−p)^k for a pool of `k` units.
pub fn success_prob(k: u32, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    -f64::exp_m1(k as f64 * f64::ln_1p(-p))
}

/// An expected-sample-size budget for design search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    /// Target expected number of pooled tests; at least 1.
    pub target_en: f64,
}

impl Budget {
    pub fn new(target_en: f64) -> Result<Budget> {
        if !target_en.is_finite() || target_en < 1.0 {
            return Err(Error::InvalidInput(format!(
                "target expected sample size must be a finite number >= 1, got {target_en}"
            )));
        }
        Ok(Budget { target_en })
    }
}

/// Largest stopping count `c >= 1` whose expected number of pooled tests
/// stays within the budget, for models `b` and `c`.
///
/// The expected size is c/θ (model b) or c/(1−θ)^... — see
/// [`Design::expected_tests`] — and is linear in c, so the candidate is
/// floor(target·rate) with rate = θ or 1−θ; a final check-and-adjust loop
/// guards against floating-point edge cases right at the boundary
/// (equality E(N) = target is allowed).
pub fn select_c(model: Model, k: u32, p: f64, budget: &Budget) -> Result<u64> {
    if model == Model::A {
        return Err(Error::InvalidInput(
            "select_c applies to the sequential models b and c only".into(),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "prevalence p must lie strictly between 0 and 1, got {p}"
        )));
    }
    let theta = success_prob(k, p);
    let rate = match model {
        Model::B => theta,
        Model::C => 1.0 - theta,
        Model::A => unreachable!(),
    };
    let target = budget.target_en;
    let mut c = (target * rate).floor() as i64;
    let expected = |c: i64| c as f64 / rate;
    while expected(c + 1) <= target {
        c += 1;
    }
    while c >= 1 && expected(c) > target {
        c -= 1;
    }
    if c < 1 {
        return Err(Error::InfeasibleDesign(format!(
            "model {} with k={k} needs {:.4} expected tests even at c=1, over the budget {}",
            model.label(),
            expected(1),
            target
        )));
    }
    Ok(c as u64)
}

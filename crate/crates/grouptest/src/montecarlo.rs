//! Monte Carlo check of the exact risk computations: simulate the pooled
//! testing process at the unit level and summarize an estimator's empirical
//! bias and mean squared error with standard errors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::accum::Neumaier;
use crate::design::{Design, Model};
use crate::error::{Error, Result};
use crate::estimator::{clamp, raw_value, Family};

/// Upper bound on pools tested per replicate before it is abandoned.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

/// Replication settings.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimConfig {
    pub replicates: u64,
    pub seed: u64,
    /// Pools-per-replicate cap; replicates that hit it are dropped and
    /// counted in `cap_hits`.
    pub max_steps: u64,
}

impl SimConfig {
    pub fn new(replicates: u64, seed: u64) -> Result<SimConfig> {
        SimConfig::with_max_steps(replicates, seed, DEFAULT_MAX_STEPS)
    }

    pub fn with_max_steps(replicates: u64, seed: u64, max_steps: u64) -> Result<SimConfig> {
        if replicates < 1 {
            return Err(Error::InvalidInput(
                "replicates must be at least 1".into(),
            ));
        }
        if max_steps < 1 {
            return Err(Error::InvalidInput(
                "max_steps must be at least 1".into(),
            ));
        }
        Ok(SimConfig { replicates, seed, max_steps })
    }
}

/// Empirical summary over the retained replicates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimSummary {
    /// Mean of (estimate − p).
    pub emp_bias: f64,
    /// Mean of (estimate − p)².
    pub emp_mse: f64,
    /// Standard error of `emp_bias`; absent with fewer than 2 retained
    /// replicates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_bias: Option<f64>,
    /// Standard error of `emp_mse`; absent with fewer than 2 retained
    /// replicates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_mse: Option<f64>,
    /// Replicates abandoned at the step cap and excluded from the moments.
    pub cap_hits: u64,
    pub replicates: u64,
    /// True when cap hits reach 0.01% of replicates, enough to distort the
    /// estimated moments.
    pub cap_rate_flagged: bool,
}

/// Draw one pool outcome: k unit-level Bernoulli(p) draws folded by OR.
///
/// All k draws are consumed even after the first positive, so the RNG stream
/// position depends only on the number of pools tested.
fn pool_positive<R: Rng>(rng: &mut R, k: u32, p: f64) -> bool {
    let mut positive = false;
    for _ in 0..k {
        positive |= rng.random_bool(p);
    }
    positive
}

/// Run one replicate of the testing process and return the observed count:
/// positive pools x (model a), negative pools y before the c-th positive
/// (model b), or positive pools z before the c-th negative (model c).
/// Returns `None` when the replicate exceeds `max_steps` pools.
pub fn simulate_once<R: Rng>(
    design: &Design,
    p: f64,
    rng: &mut R,
    max_steps: u64,
) -> Option<u64> {
    match design.model {
        Model::A => {
            if design.size > max_steps {
                return None;
            }
            let mut x = 0u64;
            for _ in 0..design.size {
                if pool_positive(rng, design.k, p) {
                    x += 1;
                }
            }
            Some(x)
        }
        Model::B | Model::C => {
            let stop_on_positive = design.model == Model::B;
            let mut stops = 0u64;
            let mut count = 0u64;
            let mut steps = 0u64;
            loop {
                if stops == design.size {
                    return Some(count);
                }
                if steps >= max_steps {
                    return None;
                }
                let positive = pool_positive(rng, design.k, p);
                steps += 1;
                if positive == stop_on_positive {
                    stops += 1;
                } else {
                    count += 1;
                }
            }
        }
    }
}

const CHUNK: u64 = 4096;

/// Simulate `config.replicates` independent runs of the testing process and
/// summarize the estimator's error. Replicate i uses an independent RNG
/// stream derived from (seed, i), so results are reproducible and
/// insensitive to replicate order.
pub fn simulate_estimator(
    family: &Family,
    design: &Design,
    p: f64,
    config: &SimConfig,
) -> Result<SimSummary> {
    family.validate(design)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!(
            "prevalence p must lie strictly between 0 and 1, got {p}"
        )));
    }
    let mut sum_d = Neumaier::new();
    let mut sum_d2 = Neumaier::new();
    let mut sum_d4 = Neumaier::new();
    // Plain partial sums over a fixed-size chunk, flushed into the
    // compensated totals: full compensation per term costs more than it
    // buys at these magnitudes.
    let (mut part_d, mut part_d2, mut part_d4) = (0.0f64, 0.0f64, 0.0f64);
    let mut in_chunk = 0u64;
    let mut cap_hits = 0u64;
    for i in 0..config.replicates {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(i);
        let Some(count) = simulate_once(design, p, &mut rng, config.max_steps) else {
            cap_hits += 1;
            continue;
        };
        let value = clamp(raw_value(family, design, count)).value;
        let d = value - p;
        let d2 = d * d;
        part_d += d;
        part_d2 += d2;
        part_d4 += d2 * d2;
        in_chunk += 1;
        if in_chunk == CHUNK {
            sum_d.add(part_d);
            sum_d2.add(part_d2);
            sum_d4.add(part_d4);
            part_d = 0.0;
            part_d2 = 0.0;
            part_d4 = 0.0;
            in_chunk = 0;
        }
    }
    sum_d.add(part_d);
    sum_d2.add(part_d2);
    sum_d4.add(part_d4);
    let n_eff = config.replicates - cap_hits;
    if n_eff == 0 {
        return Err(Error::InfeasibleDesign(format!(
            "every replicate exceeded the {}-pool cap; the design cannot be simulated at p={p}",
            config.max_steps
        )));
    }
    let n = n_eff as f64;
    let emp_bias = sum_d.value() / n;
    let emp_mse = sum_d2.value() / n;
    let (se_bias, se_mse) = if n_eff >= 2 {
        let var_d = ((sum_d2.value() - n * emp_bias * emp_bias) / (n - 1.0)).max(0.0);
        let var_d2 = ((sum_d4.value() - n * emp_mse * emp_mse) / (n - 1.0)).max(0.0);
        (Some((var_d / n).sqrt()), Some((var_d2 / n).sqrt()))
    } else {
        (None, None)
    };
    Ok(SimSummary {
        emp_bias,
        emp_mse,
        se_bias,
        se_mse,
        cap_hits,
        replicates: config.replicates,
        cap_rate_flagged: (cap_hits as f64) >= 1e-4 * (config.replicates as f64),
    })
}

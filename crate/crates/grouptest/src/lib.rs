//! Estimating a proportion from pooled (group) tests.
//!
//! When a trait is rare, testing pooled samples of k units — where a pool
//! reads positive if any unit is positive — can estimate the prevalence p
//! far more efficiently than testing units one at a time. This crate covers
//! three sampling plans for how many pools to test:
//!
//! - **model a** — a fixed number n of pools;
//! - **model b** — test pools until the c-th *positive* pool (the number of
//!   negative pools y is observed);
//! - **model c** — test pools until the c-th *negative* pool (the number of
//!   positive pools z is observed).
//!
//! On top of the plans it provides:
//!
//! - point [estimators](estimator) — the MLE, a small-sample-corrected form,
//!   a bias-subtracted form, two-parameter shrinkage forms tuned against a
//!   prior upper bound, and an exactly unbiased product form under model c;
//! - [exact evaluation](evaluate) of an estimator's bias and mean squared
//!   error by summing over the outcome distribution with a controlled
//!   truncated tail;
//! - [design search](search) for the MSE-minimizing pool size under a
//!   budget on the expected number of tests, and deterministic tuning of
//!   the shrinkage parameters;
//! - standard [comparison tables](table) over a prevalence grid, rendered
//!   as byte-stable CSV;
//! - a [Monte Carlo harness](montecarlo) that simulates individual units
//!   and pools them, as an independent check on the exact sums.
//!
//! The `grouptest` binary exposes all of it as subcommands with JSON/CSV
//! output; see the crate README for usage.

pub mod cli;
pub mod design;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod evaluate;
pub mod montecarlo;
pub mod search;
pub mod table;

mod accum;

pub use design::{select_c, success_prob, Budget, Design, Model};
pub use dist::{OutcomeDistribution, Truncation};
pub use error::{Error, Result};
pub use estimator::{estimate, Estimate, Family};
pub use evaluate::{evaluate, EvalResult};
pub use montecarlo::{simulate_estimator, simulate_once, SimConfig, SimSummary};
pub use search::{
    best_k, best_k_with, optimize_pt, PtFamilyKind, PtParams, SearchOutcome,
    PT_TUNING_MAX_SUPPORT,
};
pub use table::{generate, write_csv, TableId, TableRow, TableSpec};

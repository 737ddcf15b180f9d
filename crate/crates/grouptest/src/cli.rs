//! Command-line front end: estimation, table regeneration, design search,
//! shrinkage tuning, and simulation, with JSON records on stdout and
//! machine-readable errors on stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::design::{Budget, Design, Model};
use crate::error::{Error, Result};
use crate::estimator::{estimate, Family};
use crate::montecarlo::{simulate_estimator, SimConfig, DEFAULT_MAX_STEPS};
use crate::search::{best_k_with, optimize_pt, PtFamilyKind, SearchOutcome};
use crate::table::{generate, write_csv, TableId, TableSpec};

#[derive(Parser)]
#[command(
    name = "grouptest",
    version,
    about = "Estimate a proportion from pooled (group) tests: point estimates, exact risk, design search, and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Point estimate for one observed count under a fixed design
    Estimate(EstimateArgs),
    /// Regenerate a standard comparison table as CSV
    Table(TableArgs),
    /// Scan pool sizes for the MSE-minimizing design under a test budget
    Search(SearchArgs),
    /// Tune shrinkage parameters against a prior upper bound p0
    Ptopt(PtoptArgs),
    /// Monte Carlo estimate of an estimator's bias and MSE
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Sampling plan: a (fixed pools), b (stop on c positives), c (stop on c negatives)
    #[arg(long)]
    pub model: String,
    /// Pool size (units per pooled test)
    #[arg(long)]
    pub k: u32,
    /// Number of pooled tests (model a only)
    #[arg(long)]
    pub n: Option<u64>,
    /// Stopping count (models b and c only)
    #[arg(long)]
    pub c: Option<u64>,
    /// Observed count: positive pools (a, c) or negative pools (b)
    #[arg(long)]
    pub count: u64,
    /// One of: mle, burrows, gart, degroot, pt_alpha, pt_beta, pt_c
    #[arg(long)]
    pub estimator: String,
    #[command(flatten)]
    pub pt: PtResolution,
}

/// How a shrinkage estimator gets its parameters: explicitly, or tuned
/// against a prior upper bound.
#[derive(Args)]
pub struct PtResolution {
    /// Explicit shrinkage factor in [0,1]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Explicit shrinkage offset >= 1
    #[arg(long)]
    pub beta: Option<f64>,
    /// Prior upper bound on p; tunes any shrinkage parameters not given explicitly
    #[arg(long)]
    pub p0: Option<f64>,
}

#[derive(Args)]
pub struct TableArgs {
    /// One of: rb25, rb100, mse25, mse100
    #[arg(long)]
    pub table: String,
    /// Output CSV path
    #[arg(long)]
    pub out: String,
    /// Tail mass excluded from each exact expectation
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Largest pool size considered
    #[arg(long, default_value_t = 50)]
    pub kmax: u32,
}

#[derive(Args)]
pub struct SearchArgs {
    /// One of: mle, burrows, gart, degroot, pt_alpha, pt_beta, pt_c
    #[arg(long)]
    pub estimator: String,
    /// Sampling plan: a, b, or c
    #[arg(long)]
    pub model: String,
    /// True prevalence at which the MSE is minimized
    #[arg(long)]
    pub p: f64,
    /// Test budget: target expected number of pooled tests
    #[arg(long)]
    pub en: f64,
    /// Tail mass excluded from each exact expectation
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
    /// Largest pool size considered
    #[arg(long, default_value_t = 50)]
    pub kmax: u32,
    #[command(flatten)]
    pub pt: PtResolution,
}

#[derive(Args)]
pub struct PtoptArgs {
    /// Shrinkage family: alpha, beta, or c
    #[arg(long)]
    pub family: String,
    /// Sampling plan: b or c
    #[arg(long)]
    pub model: String,
    /// Pool size
    #[arg(long)]
    pub k: u32,
    /// Stopping count
    #[arg(long)]
    pub c: u64,
    /// Prior upper bound on p; the tuning point
    #[arg(long)]
    pub p0: f64,
    /// Tail mass excluded from the exact MSE objective
    #[arg(long, default_value_t = 1e-6)]
    pub epsilon: f64,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// One of: mle, burrows, gart, degroot, pt_alpha, pt_beta, pt_c
    #[arg(long)]
    pub estimator: String,
    /// Sampling plan: a, b, or c
    #[arg(long)]
    pub model: String,
    /// Pool size
    #[arg(long)]
    pub k: u32,
    /// Number of pooled tests (model a only)
    #[arg(long)]
    pub n: Option<u64>,
    /// Stopping count (models b and c only)
    #[arg(long)]
    pub c: Option<u64>,
    /// True prevalence
    #[arg(long)]
    pub p: f64,
    /// Number of replicates
    #[arg(long)]
    pub reps: u64,
    /// Master seed; replicate i uses substream i
    #[arg(long)]
    pub seed: u64,
    /// Pools-per-replicate cap
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    #[command(flatten)]
    pub pt: PtResolution,
}

/// Parse args, run the command, and return the process exit code. Success
/// output goes to stdout as JSON (or CSV to a file for `table`); errors go
/// to stderr as one-line JSON with a stable code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = Error::InvalidInput(e.to_string());
            eprintln!("{}", error_json(&err));
            return err.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(record) => {
            println!("{record}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}

fn error_json(e: &Error) -> String {
    json!({ "error": e.code(), "message": e.to_string() }).to_string()
}

fn dispatch(command: Command) -> Result<Value> {
    match command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Table(a) => cmd_table(a),
        Command::Search(a) => cmd_search(a),
        Command::Ptopt(a) => cmd_ptopt(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// The design size for the parsed model: --n under model a, --c otherwise,
/// each rejected where it does not apply.
fn size_for(model: Model, n: Option<u64>, c: Option<u64>) -> Result<u64> {
    match model {
        Model::A => match (n, c) {
            (Some(n), None) => Ok(n),
            (None, _) => Err(Error::InvalidInput("model a requires --n".into())),
            (Some(_), Some(_)) => {
                Err(Error::InvalidInput("model a takes --n, not --c".into()))
            }
        },
        Model::B | Model::C => match (n, c) {
            (None, Some(c)) => Ok(c),
            (_, None) => Err(Error::InvalidInput(format!(
                "model {} requires --c",
                model.label()
            ))),
            (Some(_), Some(_)) => Err(Error::InvalidInput(format!(
                "model {} takes --c, not --n",
                model.label()
            ))),
        },
    }
}

enum EstimatorName {
    Plain(Family),
    Pt(PtFamilyKind),
}

fn parse_estimator(name: &str) -> Result<EstimatorName> {
    Ok(match name {
        "mle" => EstimatorName::Plain(Family::Mle),
        "burrows" => EstimatorName::Plain(Family::Burrows),
        "gart" => EstimatorName::Plain(Family::Gart),
        "degroot" => EstimatorName::Plain(Family::Degroot),
        "pt_alpha" => EstimatorName::Pt(PtFamilyKind::Alpha),
        "pt_beta" => EstimatorName::Pt(PtFamilyKind::Beta),
        "pt_c" => EstimatorName::Pt(PtFamilyKind::C),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown estimator '{other}' (expected one of: mle, burrows, gart, degroot, pt_alpha, pt_beta, pt_c)"
            )))
        }
    })
}

/// Resolve a shrinkage family's parameters for one fixed design: all
/// explicit, or all tuned at --p0. Mixing the two styles is rejected as
/// ambiguous.
fn resolve_pt(
    kind: PtFamilyKind,
    model: Model,
    k: u32,
    c: u64,
    pt: &PtResolution,
    epsilon: f64,
) -> Result<Family> {
    let explicit: &[Option<f64>] = match kind {
        PtFamilyKind::Alpha => &[pt.alpha],
        PtFamilyKind::Beta => &[pt.beta],
        PtFamilyKind::C => &[pt.alpha, pt.beta],
    };
    let all_given = explicit.iter().all(|v| v.is_some());
    let none_given = explicit.iter().all(|v| v.is_none());
    if all_given && pt.p0.is_none() {
        return Ok(kind.family(pt.alpha.unwrap_or(1.0), pt.beta.unwrap_or(1.0)));
    }
    if none_given {
        if let Some(p0) = pt.p0 {
            let tuned = optimize_pt(kind, model, k, c, p0, epsilon)?;
            return Ok(kind.family(tuned.alpha.unwrap_or(1.0), tuned.beta.unwrap_or(1.0)));
        }
        return Err(Error::InvalidInput(format!(
            "estimator pt_{} needs its shrinkage parameters: pass them explicitly or pass --p0 to tune them",
            kind.name()
        )));
    }
    Err(Error::InvalidInput(
        "pass every shrinkage parameter explicitly, or --p0 alone to tune them; mixing the two is ambiguous".into(),
    ))
}

/// Reject stray shrinkage flags on estimators that take no parameters.
fn reject_pt_flags(name: &str, pt: &PtResolution) -> Result<()> {
    if pt.alpha.is_some() || pt.beta.is_some() || pt.p0.is_some() {
        return Err(Error::InvalidInput(format!(
            "--alpha/--beta/--p0 are only meaningful for shrinkage estimators, not '{name}'"
        )));
    }
    Ok(())
}

/// Resolve an estimator name plus optional shrinkage parameters into a
/// concrete family for one design: shrinkage names take either all their
/// parameters explicitly or `p0` alone (tuned on that design at `epsilon`),
/// other names take none. Shared by the subcommands and the browser front
/// end so both enforce identical rules.
pub fn resolve_family(
    name: &str,
    model: Model,
    k: u32,
    size: u64,
    pt: &PtResolution,
    epsilon: f64,
) -> Result<Family> {
    match parse_estimator(name)? {
        EstimatorName::Plain(family) => {
            reject_pt_flags(name, pt)?;
            Ok(family)
        }
        EstimatorName::Pt(kind) => resolve_pt(kind, model, k, size, pt, epsilon),
    }
}

/// JSON echo of the resolved design: {"k":…, "n"|"c":…}.
fn design_echo(record: &mut serde_json::Map<String, Value>, design: &Design) {
    record.insert("k".into(), json!(design.k));
    let size_key = if design.model == Model::A { "n" } else { "c" };
    record.insert(size_key.into(), json!(design.size));
}

fn pt_echo(record: &mut serde_json::Map<String, Value>, family: &Family) {
    let (alpha, beta) = family.pt_params();
    if let Some(a) = alpha {
        record.insert("alpha".into(), json!(a));
    }
    if let Some(b) = beta {
        record.insert("beta".into(), json!(b));
    }
}

fn cmd_estimate(a: EstimateArgs) -> Result<Value> {
    let model = Model::parse(&a.model)?;
    let size = size_for(model, a.n, a.c)?;
    let design = Design::new(model, a.k, size)?;
    let family = match parse_estimator(&a.estimator)? {
        EstimatorName::Plain(f) => {
            reject_pt_flags(&a.estimator, &a.pt)?;
            f
        }
        EstimatorName::Pt(kind) => resolve_pt(kind, model, a.k, size, &a.pt, 1e-6)?,
    };
    let est = estimate(&family, &design, a.count)?;
    let expected_n = design.expected_tests(est.value);
    let mut record = serde_json::Map::new();
    record.insert("estimator".into(), json!(family.name()));
    record.insert("model".into(), json!(model.label()));
    design_echo(&mut record, &design);
    record.insert("count".into(), json!(a.count));
    pt_echo(&mut record, &family);
    record.insert("estimate".into(), json!(est.value));
    record.insert("clamped".into(), json!(est.clamped));
    record.insert(
        "expected_n".into(),
        if expected_n.is_finite() { json!(expected_n) } else { Value::Null },
    );
    Ok(Value::Object(record))
}

fn cmd_table(a: TableArgs) -> Result<Value> {
    let table_id = TableId::parse(&a.table)?;
    let mut spec = TableSpec::new(table_id);
    spec.epsilon = a.epsilon;
    spec.k_range = (spec.k_range.0, a.kmax);
    // Open the output before generating: a bad path should fail in
    // milliseconds, not after minutes of table computation.
    let file = File::create(&a.out)?;
    let rows = generate(&spec)?;
    let mut w = BufWriter::new(file);
    write_csv(&mut w, &rows)?;
    use std::io::Write;
    w.flush()?;
    Ok(json!({
        "table": table_id.label(),
        "rows": rows.len(),
        "out": a.out,
    }))
}

fn cmd_search(a: SearchArgs) -> Result<Value> {
    let model = Model::parse(&a.model)?;
    let budget = Budget::new(a.en)?;
    let k_range = (2, a.kmax);
    let name = parse_estimator(&a.estimator)?;
    let outcome: SearchOutcome = match &name {
        EstimatorName::Plain(f) => {
            reject_pt_flags(&a.estimator, &a.pt)?;
            let f = *f;
            best_k_with(model, a.p, &budget, k_range, a.epsilon, |_, _| Ok(f))?
        }
        EstimatorName::Pt(kind) => {
            let kind = *kind;
            best_k_with(model, a.p, &budget, k_range, a.epsilon, |k, c| {
                resolve_pt(kind, model, k, c, &a.pt, a.epsilon)
            })?
        }
    };
    let mut record = serde_json::Map::new();
    record.insert("estimator".into(), json!(a.estimator));
    record.insert("model".into(), json!(model.label()));
    record.insert("p".into(), json!(a.p));
    record.insert("target_en".into(), json!(a.en));
    record.insert("epsilon".into(), json!(a.epsilon));
    let outcome_value = serde_json::to_value(&outcome)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    if let Value::Object(m) = outcome_value {
        record.extend(m);
    }
    Ok(Value::Object(record))
}

fn cmd_ptopt(a: PtoptArgs) -> Result<Value> {
    let kind = PtFamilyKind::parse(&a.family)?;
    let model = Model::parse(&a.model)?;
    let params = optimize_pt(kind, model, a.k, a.c, a.p0, a.epsilon)?;
    let mut record = serde_json::Map::new();
    record.insert("family".into(), json!(kind.name()));
    record.insert("model".into(), json!(model.label()));
    record.insert("k".into(), json!(a.k));
    record.insert("c".into(), json!(a.c));
    record.insert("epsilon".into(), json!(a.epsilon));
    let params_value = serde_json::to_value(params)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    if let Value::Object(m) = params_value {
        record.extend(m);
    }
    Ok(Value::Object(record))
}

fn cmd_simulate(a: SimulateArgs) -> Result<Value> {
    let model = Model::parse(&a.model)?;
    let size = size_for(model, a.n, a.c)?;
    let design = Design::new(model, a.k, size)?;
    let family = match parse_estimator(&a.estimator)? {
        EstimatorName::Plain(f) => {
            reject_pt_flags(&a.estimator, &a.pt)?;
            f
        }
        EstimatorName::Pt(kind) => resolve_pt(kind, model, a.k, size, &a.pt, 1e-6)?,
    };
    let config = SimConfig::with_max_steps(a.reps, a.seed, a.max_steps)?;
    let summary = simulate_estimator(&family, &design, a.p, &config)?;
    let mut record = serde_json::Map::new();
    record.insert("estimator".into(), json!(family.name()));
    record.insert("model".into(), json!(model.label()));
    design_echo(&mut record, &design);
    pt_echo(&mut record, &family);
    record.insert("p".into(), json!(a.p));
    record.insert("seed".into(), json!(a.seed));
    record.insert("max_steps".into(), json!(a.max_steps));
    let summary_value = serde_json::to_value(summary)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    if let Value::Object(m) = summary_value {
        record.extend(m);
    }
    Ok(Value::Object(record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_ok(args: &[&str]) -> Value {
        let mut full = vec!["grouptest"];
        full.extend_from_slice(args);
        let cli = Cli::try_parse_from(full).expect("args parse");
        dispatch(cli.command).expect("command succeeds")
    }

    fn run_err(args: &[&str]) -> Error {
        let mut full = vec!["grouptest"];
        full.extend_from_slice(args);
        let cli = Cli::try_parse_from(full).expect("args parse");
        dispatch(cli.command).expect_err("command fails")
    }

    #[test]
    fn estimate_record_has_the_documented_shape() {
        let v = run_ok(&[
            "estimate", "--model", "a", "--k", "5", "--n", "10", "--count", "5",
            "--estimator", "mle",
        ]);
        assert_eq!(v["estimator"], "mle");
        assert_eq!(v["model"], "a");
        assert_eq!(v["n"], 10);
        assert!((v["estimate"].as_f64().unwrap() - 0.129449).abs() < 5e-7);
        assert_eq!(v["clamped"], false);
        assert_eq!(v["expected_n"], 10.0);
    }

    #[test]
    fn estimate_at_zero_count_model_c_is_zero_with_null_expected_n() {
        let v = run_ok(&[
            "estimate", "--model", "c", "--k", "2", "--c", "2", "--count", "0",
            "--estimator", "degroot",
        ]);
        assert_eq!(v["estimate"], 0.0);
        // At an estimate of 0 no pool is ever positive... model c stops
        // after c negative pools, so E(N) = c is finite here.
        assert_eq!(v["expected_n"], 2.0);
    }

    #[test]
    fn degenerate_corrected_estimator_is_a_distinct_error() {
        let e = run_err(&[
            "estimate", "--model", "b", "--k", "3", "--c", "1", "--count", "4",
            "--estimator", "burrows",
        ]);
        assert_eq!(e.code(), "DEGENERATE_ESTIMATOR");
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn model_size_flags_are_mutually_exclusive() {
        let e = run_err(&[
            "estimate", "--model", "a", "--k", "5", "--c", "10", "--count", "0",
            "--estimator", "mle",
        ]);
        assert_eq!(e.code(), "INVALID_INPUT");
        let e = run_err(&[
            "estimate", "--model", "b", "--k", "5", "--n", "10", "--count", "0",
            "--estimator", "mle",
        ]);
        assert_eq!(e.code(), "INVALID_INPUT");
    }

    #[test]
    fn shrinkage_parameters_resolve_explicitly_or_from_p0() {
        let v = run_ok(&[
            "estimate", "--model", "b", "--k", "2", "--c", "5", "--count", "3",
            "--estimator", "pt_c", "--alpha", "0.9", "--beta", "2.0",
        ]);
        assert_eq!(v["alpha"], 0.9);
        assert_eq!(v["beta"], 2.0);
        let v = run_ok(&[
            "estimate", "--model", "b", "--k", "2", "--c", "5", "--count", "3",
            "--estimator", "pt_c", "--p0", "0.1",
        ]);
        assert!(v["alpha"].as_f64().unwrap() <= 1.0);
        assert!(v["beta"].as_f64().unwrap() >= 1.0);
        let e = run_err(&[
            "estimate", "--model", "b", "--k", "2", "--c", "5", "--count", "3",
            "--estimator", "pt_c", "--alpha", "0.9",
        ]);
        assert_eq!(e.code(), "INVALID_INPUT");
        let e = run_err(&[
            "estimate", "--model", "b", "--k", "2", "--c", "5", "--count", "3",
            "--estimator", "mle", "--p0", "0.1",
        ]);
        assert_eq!(e.code(), "INVALID_INPUT");
    }

    #[test]
    fn search_reports_the_winning_design() {
        let v = run_ok(&[
            "search", "--estimator", "mle", "--model", "a", "--p", "0.1", "--en", "25",
        ]);
        assert!(v["k_star"].as_u64().unwrap() >= 2);
        assert_eq!(v["c_star"], 25);
        let mse_x1e4 = v["result"]["mse_x1e4"].as_f64().unwrap();
        assert!((mse_x1e4 - 7.3243).abs() < 0.002, "mse_x1e4 {mse_x1e4}");
    }

    #[test]
    fn ptopt_respects_the_parameter_box() {
        let v = run_ok(&[
            "ptopt", "--family", "c", "--model", "b", "--k", "2", "--c", "5",
            "--p0", "0.1",
        ]);
        let alpha = v["alpha"].as_f64().unwrap();
        let beta = v["beta"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&alpha));
        assert!((1.0..=50.0).contains(&beta));
        assert!(v["achieved_mse"].as_f64().unwrap() > 0.0);
        assert_eq!(v["p0"], 0.1);
    }

    #[test]
    fn simulate_summarizes_replicates() {
        let v = run_ok(&[
            "simulate", "--estimator", "mle", "--model", "b", "--k", "4", "--c", "3",
            "--p", "0.1", "--reps", "500", "--seed", "42",
        ]);
        assert_eq!(v["replicates"], 500);
        assert_eq!(v["cap_hits"], 0);
        assert!(v["se_bias"].as_f64().unwrap() > 0.0);
        assert_eq!(v["seed"], 42);
    }

    #[test]
    fn infeasible_search_exits_distinctly() {
        let e = run_err(&[
            "search", "--estimator", "mle", "--model", "b", "--p", "0.001", "--en", "5",
        ]);
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn unknown_names_are_invalid_input() {
        assert_eq!(run_err(&["estimate", "--model", "d", "--k", "5", "--n", "10",
            "--count", "0", "--estimator", "mle"]).code(), "INVALID_INPUT");
        assert_eq!(run_err(&["estimate", "--model", "a", "--k", "5", "--n", "10",
            "--count", "0", "--estimator", "midpoint"]).code(), "INVALID_INPUT");
        assert_eq!(run_err(&["table", "--table", "rb42", "--out", "/tmp/x.csv"]).code(),
            "INVALID_INPUT");
    }

    #[test]
    fn unwritable_table_path_is_an_io_error() {
        let e = run_err(&[
            "table", "--table", "rb25", "--out", "/nonexistent-dir/t.csv",
            "--kmax", "3",
        ]);
        assert_eq!(e.exit_code(), 5);
    }
}

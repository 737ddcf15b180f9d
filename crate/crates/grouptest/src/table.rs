//! Comparison tables: for each estimator row and each prevalence on a fixed
//! grid, pick the MSE-minimizing design under the test budget and report the
//! exact bias and MSE, rendered deterministically as CSV.

use std::collections::HashMap;
use std::io::Write;

use crate::design::{Budget, Model};
use crate::error::{Error, Result};
use crate::estimator::Family;
use crate::evaluate::EvalResult;
use crate::search::{best_k_with, optimize_pt, PtFamilyKind, DEFAULT_K_RANGE};

/// The four standard comparison tables: relative bias or MSE, at an expected
/// budget of 25 or 100 tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    Rb25,
    Rb100,
    Mse25,
    Mse100,
}

impl TableId {
    pub fn parse(s: &str) -> Result<TableId> {
        match s {
            "rb25" => Ok(TableId::Rb25),
            "rb100" => Ok(TableId::Rb100),
            "mse25" => Ok(TableId::Mse25),
            "mse100" => Ok(TableId::Mse100),
            other => Err(Error::InvalidInput(format!(
                "unknown table '{other}' (expected one of: rb25, rb100, mse25, mse100)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TableId::Rb25 => "rb25",
            TableId::Rb100 => "rb100",
            TableId::Mse25 => "mse25",
            TableId::Mse100 => "mse100",
        }
    }

    pub fn target_en(&self) -> f64 {
        match self {
            TableId::Rb25 | TableId::Mse25 => 25.0,
            TableId::Rb100 | TableId::Mse100 => 100.0,
        }
    }

    /// MSE tables carry one extra row (the unbiased product estimator).
    pub fn is_mse(&self) -> bool {
        matches!(self, TableId::Mse25 | TableId::Mse100)
    }
}

/// The default prevalence grid of the comparison tables.
pub const DEFAULT_P_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5];

/// Everything needed to regenerate one table.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub table_id: TableId,
    pub p_grid: Vec<f64>,
    pub target_en: f64,
    pub epsilon: f64,
    pub k_range: (u32, u32),
}

impl TableSpec {
    pub fn new(table_id: TableId) -> TableSpec {
        TableSpec {
            table_id,
            p_grid: DEFAULT_P_GRID.to_vec(),
            target_en: table_id.target_en(),
            epsilon: 1e-6,
            k_range: DEFAULT_K_RANGE,
        }
    }
}

/// How one table row picks its estimator for a candidate design.
enum RowKind {
    /// Same estimator for every design.
    Plain(Family),
    /// Two-parameter shrinkage estimator re-tuned at p0 per design.
    PtTuned { p0: f64 },
}

struct RowSpec {
    label: String,
    model: Model,
    kind: RowKind,
}

fn plain(label: &str, model: Model, family: Family) -> RowSpec {
    RowSpec { label: label.to_string(), model, kind: RowKind::Plain(family) }
}

fn pt(model: Model, p0: f64) -> RowSpec {
    RowSpec {
        label: format!("pt_c({p0})"),
        model,
        kind: RowKind::PtTuned { p0 },
    }
}

/// Rows in published order: the MLEs, the small-sample-corrected forms, the
/// shrinkage estimators at three prior bounds per sequential model, the
/// bias-subtracted forms, and (MSE tables only) the unbiased product
/// estimator.
fn row_specs(table: TableId) -> Vec<RowSpec> {
    let mut rows = vec![
        plain("mle", Model::A, Family::Mle),
        plain("mle", Model::B, Family::Mle),
        plain("mle", Model::C, Family::Mle),
        plain("burrows", Model::A, Family::Burrows),
        plain("burrows", Model::B, Family::Burrows),
        plain("burrows", Model::C, Family::Burrows),
        pt(Model::B, 0.01),
        pt(Model::B, 0.1),
        pt(Model::B, 0.5),
        pt(Model::C, 0.01),
        pt(Model::C, 0.1),
        pt(Model::C, 0.5),
        plain("gart", Model::B, Family::Gart),
        plain("gart", Model::C, Family::Gart),
    ];
    if table.is_mse() {
        rows.push(plain("degroot", Model::C, Family::Degroot));
    }
    rows
}

/// One generated cell.
#[derive(Debug, Clone)]
pub struct TableRow {
    pub estimator: String,
    pub model: Model,
    pub p: f64,
    pub target_en: f64,
    pub k_star: u32,
    pub c_star: u64,
    pub actual_en: f64,
    pub bias: f64,
    pub rel_bias_pct: f64,
    pub mse: f64,
    pub mse_x1e4: f64,
    pub truncation_bound: u64,
    pub tail_mass: f64,
    pub clamp_count: u64,
}

impl TableRow {
    fn from_cell(spec: &RowSpec, p: f64, target_en: f64, k: u32, c: u64, r: &EvalResult) -> TableRow {
        TableRow {
            estimator: spec.label.clone(),
            model: spec.model,
            p,
            target_en,
            k_star: k,
            c_star: c,
            actual_en: r.expected_n,
            bias: r.bias,
            rel_bias_pct: r.rel_bias_pct,
            mse: r.mse,
            mse_x1e4: r.mse_x1e4,
            truncation_bound: r.truncation_bound,
            tail_mass: r.tail_mass,
            clamp_count: r.clamp_count,
        }
    }
}

/// Generate every cell of `spec`, row by row in published order, columns in
/// p-grid order.
pub fn generate(spec: &TableSpec) -> Result<Vec<TableRow>> {
    let budget = Budget::new(spec.target_en)?;
    let mut out = Vec::new();
    for row in row_specs(spec.table_id) {
        // Shrinkage tuning depends only on the candidate design, not on the
        // cell's p, so designs recurring across columns reuse their tuned
        // parameters.
        let mut tuned: HashMap<(u32, u64), (f64, f64)> = HashMap::new();
        for &p in &spec.p_grid {
            let outcome = match &row.kind {
                RowKind::Plain(family) => {
                    best_k_with(row.model, p, &budget, spec.k_range, spec.epsilon, |_, _| {
                        Ok(*family)
                    })?
                }
                RowKind::PtTuned { p0 } => {
                    best_k_with(row.model, p, &budget, spec.k_range, spec.epsilon, |k, c| {
                        let (alpha, beta) = match tuned.get(&(k, c)) {
                            Some(&ab) => ab,
                            None => {
                                let params = optimize_pt(
                                    PtFamilyKind::C,
                                    row.model,
                                    k,
                                    c,
                                    *p0,
                                    spec.epsilon,
                                )?;
                                let ab = (params.alpha.unwrap(), params.beta.unwrap());
                                tuned.insert((k, c), ab);
                                ab
                            }
                        };
                        Ok(Family::PtC { alpha, beta })
                    })?
                }
            };
            out.push(TableRow::from_cell(
                &row,
                p,
                spec.target_en,
                outcome.k_star,
                outcome.c_star,
                &outcome.result,
            ));
        }
    }
    Ok(out)
}

/// Exact column order of the CSV output.
pub const CSV_HEADER: &str = "estimator,model,p,target_en,k_star,c_star,actual_en,bias,rel_bias_pct,mse,mse_x1e4,truncation_bound,tail_mass,clamp_count";

/// Render a float with 6 significant digits, deterministically: plain
/// decimal notation in a moderate range, scientific outside it, and bare
/// `0` for zero.
pub(crate) fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let ax = x.abs();
    if (1e-4..1e6).contains(&ax) {
        let decimals = (5 - ax.log10().floor() as i32).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Write `rows` as CSV with `\n` line endings; byte-identical for identical
/// inputs.
pub fn write_csv<W: Write>(mut w: W, rows: &[TableRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.estimator,
            r.model.label(),
            fmt_sig(r.p),
            fmt_sig(r.target_en),
            r.k_star,
            r.c_star,
            fmt_sig(r.actual_en),
            fmt_sig(r.bias),
            fmt_sig(r.rel_bias_pct),
            fmt_sig(r.mse),
            fmt_sig(r.mse_x1e4),
            r.truncation_bound,
            fmt_sig(r.tail_mass),
            r.clamp_count,
        )?;
    }
    Ok(())
}

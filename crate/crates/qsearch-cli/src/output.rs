//! Output records and deterministic number rendering.
//!
//! JSON summaries are single objects with a `schema` version field and keys
//! in struct declaration order; floats are rounded to 6 significant digits
//! before serialization.  Tables print `pi*` at 3 decimals (round half to
//! even) to match the reference-table precision.

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Round to 6 significant digits (ties to even); normalizes -0.0 to 0.0.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(5 - magnitude);
    (x * factor).round_ties_even() / factor
}

/// Fixed 3-decimal rendering with round-half-even, for table cells.
pub fn dec3(x: f64) -> String {
    format!("{:.3}", (x * 1000.0).round_ties_even() / 1000.0)
}

#[derive(Serialize)]
pub struct ThresholdRecord {
    pub schema: u32,
    pub command: &'static str,
    pub c: f64,
    pub pi_hat: f64,
    pub tol: f64,
    pub pi_star: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub value_at_prior: f64,
    pub near_prior_warning: bool,
}

#[derive(Serialize)]
pub struct TableRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_hat: Option<f64>,
    pub pi_star: f64,
}

#[derive(Serialize)]
pub struct TableRecord {
    pub schema: u32,
    pub command: &'static str,
    pub table_id: u8,
    pub fixed_param: &'static str,
    pub fixed_value: f64,
    pub sweep_param: &'static str,
    pub rows: Vec<TableRow>,
}

#[derive(Serialize)]
pub struct PathSummary {
    pub schema: u32,
    pub command: &'static str,
    pub mode: String,
    pub c: f64,
    pub pi_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub n: usize,
    pub seed: u64,
    pub terminal_mean: f64,
    pub terminal_se: f64,
    pub terminal_min: f64,
    pub terminal_max: f64,
    pub min_value: f64,
    pub mean_regulator: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_impulses: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regulator_identity_ok: Option<bool>,
}

#[derive(Serialize)]
pub struct CoupledSummary {
    pub schema: u32,
    pub command: &'static str,
    pub mode: String,
    pub c: f64,
    pub pi_hat: f64,
    pub eps: f64,
    pub dt: f64,
    pub horizon: f64,
    pub n: usize,
    pub seed: u64,
    pub mean_sup_diff_sq: f64,
    pub mean_sup_x_diff_sq: f64,
    pub sup_reg_diff_max: f64,
    pub reg_within_eps: bool,
}

#[derive(Serialize)]
pub struct SearchSummary {
    pub schema: u32,
    pub command: &'static str,
    pub mode: String,
    pub c: f64,
    pub pi_hat: f64,
    pub eps2: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub pi_star: f64,
    pub max_time: f64,
    pub mean_cost: f64,
    pub std_err: f64,
    pub p_wrong: f64,
    pub mean_tau: f64,
    pub mean_switches: f64,
    pub truncated_trials: usize,
    pub analytic_value: f64,
    pub rel_gap: f64,
}

#[derive(Serialize)]
pub struct PlanRecord {
    pub schema: u32,
    pub command: &'static str,
    pub c: f64,
    pub pi_hat: f64,
    pub eps_target: f64,
    pub pi_star: f64,
    pub expected_tau: f64,
    pub t_bound: f64,
    pub feasible: bool,
    pub eps2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log10_eps2_required: Option<f64>,
}

#[derive(Serialize)]
pub struct RiskRecord {
    pub schema: u32,
    pub command: &'static str,
    pub c: f64,
    pub pi_hat: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub pi_star: f64,
    pub analytic_value: f64,
    pub mean_cost: f64,
    pub std_err: f64,
    pub rel_gap: f64,
}

/// Serialize a record as the single pretty-printed JSON object commands
/// emit on stdout.
pub fn to_json<T: Serialize>(record: &T) -> String {
    let mut s = serde_json::to_string_pretty(record).expect("record serialization cannot fail");
    s.push('\n');
    s
}

/// Key-value CSV used by the scalar-output commands.
pub fn key_value_csv(rows: &[(&str, String)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(k);
        out.push(',');
        out.push_str(v);
        out.push('\n');
    }
    out
}

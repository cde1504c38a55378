//! Trace and summary file formats. Traces are CSV with 17-significant-
//! digit decimals so doubles survive a round trip bit for bit; summaries
//! are JSON documents in which every estimate carries either a standard
//! error or a surrogate error bound.

use serde::Serialize;
use thiserror::Error;

use crate::analysis::Report;
use crate::domain::RoundTrace;
use crate::protocol::{OptEstimate, ReplicationStats};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: expected {want} fields, found {got}")]
    FieldCount { line: usize, want: usize, got: usize },
    #[error("line {line}: cannot parse field '{field}'")]
    BadField { line: usize, field: String },
    #[error("missing header row")]
    MissingHeader,
    #[error("unexpected header '{0}'")]
    BadHeader(String),
}

pub const TRACE_HEADER: &str =
    "round,buyer_index,context,price,bid,true_value,sold,omega,xi,expert_id";

/// Formats a double with 17 significant digits; parses back exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One trace-file row. The file format carries the posted price rather
/// than the full weight vector, so this is narrower than a protocol trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub buyer_index: usize,
    pub context: Vec<f64>,
    pub price: f64,
    pub bid: f64,
    pub true_value: f64,
    pub sold: bool,
    pub omega: bool,
    pub xi: bool,
    pub expert_id: Option<usize>,
}

impl From<&RoundTrace> for TraceRow {
    fn from(trace: &RoundTrace) -> Self {
        Self {
            round: trace.round,
            buyer_index: trace.buyer_index,
            context: trace.context.coords().to_vec(),
            price: trace.price,
            bid: trace.bid.value(),
            true_value: trace.true_value.value(),
            sold: trace.sold,
            omega: trace.coin_omega,
            xi: trace.coin_xi,
            expert_id: trace.expert_chosen,
        }
    }
}

fn flag(value: bool) -> &'static str {
    if value {
        "1"
    } else {
        "0"
    }
}

pub fn emit_trace_rows(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 120 + 80);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in rows {
        let context = row
            .context
            .iter()
            .map(|c| fmt_f64(*c))
            .collect::<Vec<_>>()
            .join(";");
        let expert = row.expert_id.map(|e| e.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.round,
            row.buyer_index,
            context,
            fmt_f64(row.price),
            fmt_f64(row.bid),
            fmt_f64(row.true_value),
            flag(row.sold),
            flag(row.omega),
            flag(row.xi),
            expert,
        ));
    }
    out
}

pub fn emit_trace(traces: &[RoundTrace]) -> String {
    let rows: Vec<TraceRow> = traces.iter().map(TraceRow::from).collect();
    emit_trace_rows(&rows)
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>, TraceError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(TraceError::MissingHeader)?;
    if header.trim() != TRACE_HEADER {
        return Err(TraceError::BadHeader(header.to_string()));
    }
    let mut rows = Vec::new();
    for (index, raw) in lines {
        let line = index + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 10 {
            return Err(TraceError::FieldCount { line, want: 10, got: fields.len() });
        }
        let bad = |field: &str| TraceError::BadField { line, field: field.to_string() };
        let parse_flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(bad(other)),
        };
        let context = fields[2]
            .split(';')
            .map(|c| c.parse::<f64>().map_err(|_| bad(c)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(TraceRow {
            round: fields[0].parse().map_err(|_| bad(fields[0]))?,
            buyer_index: fields[1].parse().map_err(|_| bad(fields[1]))?,
            context,
            price: fields[3].parse().map_err(|_| bad(fields[3]))?,
            bid: fields[4].parse().map_err(|_| bad(fields[4]))?,
            true_value: fields[5].parse().map_err(|_| bad(fields[5]))?,
            sold: parse_flag(fields[6])?,
            omega: parse_flag(fields[7])?,
            xi: parse_flag(fields[8])?,
            expert_id: if fields[9].trim().is_empty() {
                None
            } else {
                Some(fields[9].trim().parse().map_err(|_| bad(fields[9]))?)
            },
        });
    }
    Ok(rows)
}

/// A mean with its sampling error.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateWithError {
    pub mean: f64,
    pub std_error: f64,
}

impl From<&ReplicationStats> for EstimateWithError {
    fn from(stats: &ReplicationStats) -> Self {
        Self { mean: stats.mean, std_error: stats.std_error }
    }
}

/// A hindsight-optimum estimate with its surrogate error bound.
#[derive(Debug, Clone, Serialize)]
pub struct OptSummary {
    pub mean: f64,
    pub std_error: f64,
    pub oracle_mode: String,
    pub surrogate_error_bound: f64,
}

impl OptSummary {
    pub fn from_estimates(estimates: &[OptEstimate]) -> Self {
        let stats =
            ReplicationStats::from_samples(estimates.iter().map(|e| e.value).collect());
        let worst_bound = estimates.iter().map(|e| e.error_bound).fold(0.0, f64::max);
        Self {
            mean: stats.mean,
            std_error: stats.std_error,
            oracle_mode: estimates.first().map(|e| e.mode.to_string()).unwrap_or_default(),
            surrogate_error_bound: worst_bound,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretSummary {
    /// "standard" when every buyer is truthful; otherwise "profile-gap".
    pub kind: String,
    pub mean: f64,
    pub std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeFlags {
    pub seller: String,
    pub environment: String,
    pub expert_mode: String,
    pub grid_override: bool,
    /// Sampled-dictionary results carry no family-level guarantee.
    pub heuristic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_override: Option<f64>,
    pub disable_random_pricing: bool,
}

/// The JSON summary document written next to each trace.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryFile {
    pub config: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub replications: u32,
    pub mode: ModeFlags,
    pub revenue: EstimateWithError,
    pub opt_truth: OptSummary,
    pub opt_bids: OptSummary,
    pub regret: RegretSummary,
    pub buyer_utilities: Vec<EstimateWithError>,
    pub seller_value_reads: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub verifier_reports: Vec<Report>,
}

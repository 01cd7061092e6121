//! Result persistence: per-CPI trace CSVs with a fixed column order,
//! aggregated metric CSVs, and a JSON metadata sidecar echoing the full
//! configuration. Floats are serialized with 17 significant digits so a
//! re-import reproduces them bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::harness::{EpisodeTrace, MonteCarloResult};

/// 17-significant-digit scientific form; round-trips every f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Fixed trace header for `n_actions` placement columns.
pub fn trace_header(n_actions: usize) -> String {
    let mut h = String::from(
        "cpi,true_x,true_y,true_vx,true_vy,est_x,est_y,est_vx,est_vy,rate_bps_hz,kl,sensing_w,feasible",
    );
    for i in 1..=n_actions {
        write!(h, ",a{i}").unwrap();
    }
    h
}

pub fn trace_to_csv(trace: &EpisodeTrace) -> String {
    let n_actions = trace.records.first().map_or(0, |r| r.action.len());
    let mut out = trace_header(n_actions);
    out.push('\n');
    for r in &trace.records {
        let mut row = vec![r.cpi.to_string()];
        for v in [
            r.true_xi[0],
            r.true_xi[1],
            r.true_xi[2],
            r.true_xi[3],
            r.est_xi[0],
            r.est_xi[1],
            r.est_xi[2],
            r.est_xi[3],
            r.rate,
            r.kl,
            r.sensing_w,
        ] {
            row.push(format_float(v));
        }
        row.push(if r.feasible { "1".into() } else { "0".into() });
        for a in &r.action {
            row.push(format_float(*a));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_trace_csv(trace: &EpisodeTrace, path: &Path) -> Result<()> {
    std::fs::write(path, trace_to_csv(trace)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One parsed trace row (floats only; `cpi` and `feasible` widened).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub cpi: usize,
    pub values: Vec<f64>,
    pub feasible: bool,
    pub actions: Vec<f64>,
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty trace file".into()))?;
    if !header.starts_with("cpi,true_x") {
        return Err(Error::Parse("unexpected trace header".into()));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 13 {
            return Err(Error::Parse(format!("trace line {}: too few fields", ln + 2)));
        }
        let parse =
            |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)));
        let cpi = fields[0]
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 2)))?;
        let values = fields[1..12].iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?;
        let feasible = fields[12] == "1";
        let actions = fields[13..].iter().map(|s| parse(s)).collect::<Result<Vec<f64>>>()?;
        rows.push(TraceRow { cpi, values, feasible, actions });
    }
    Ok(rows)
}

/// Aggregated metrics CSV: `cpi,method,mean_rate_ma`.
pub fn metrics_to_csv(result: &MonteCarloResult) -> String {
    let mut out = String::from("cpi,method,mean_rate_ma\n");
    for m in &result.methods {
        for (i, v) in m.mean_rate_ma.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, m.method.name(), format_float(*v)));
        }
    }
    out
}

pub fn write_metrics_csv(result: &MonteCarloResult, path: &Path) -> Result<()> {
    std::fs::write(path, metrics_to_csv(result)).map_err(|e| Error::io(path.display().to_string(), e))
}

/// JSON sidecar: version string, master seed, and the full config echo.
pub fn sidecar_json(scn: &Scenario) -> String {
    let value = serde_json::json!({
        "version": format!("pass-covert-{}", env!("CARGO_PKG_VERSION")),
        "seed": scn.config.seed,
        "config": scn.config,
    });
    serde_json::to_string_pretty(&value).expect("sidecar serializes")
}

pub fn write_sidecar(scn: &Scenario, path: &Path) -> Result<()> {
    std::fs::write(path, sidecar_json(scn)).map_err(|e| Error::io(path.display().to_string(), e))
}

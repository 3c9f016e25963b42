//! CSV, JSON and markdown rendering of solve reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::suite::SolveReport;
use crate::error::{Error, Result};

pub const REPORT_SCHEMA: &str = "cqap-report/1";

pub const CSV_HEADER: [&str; 11] = [
    "instance_id",
    "method",
    "params",
    "objective_relaxed",
    "objective_binary",
    "feasible",
    "gap_pct",
    "runtime_s",
    "iterations",
    "seed",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ReportFile {
    schema: String,
    reports: Vec<SolveReport>,
}

/// Shortest representation that parses back to the same value.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

fn format_params(params: &BTreeMap<String, String>) -> String {
    params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

fn csv(reports: &[SolveReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for r in reports {
        w.write_record([
            r.instance_id.clone(),
            r.method.label(),
            format_params(&r.params),
            opt(r.objective_relaxed),
            opt(r.objective_binary),
            r.feasible.to_string(),
            opt(r.gap_pct),
            opt(r.runtime_s),
            r.iterations.to_string(),
            r.seed.to_string(),
            r.status.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn markdown(reports: &[SolveReport]) -> Vec<u8> {
    // Best feasible binary objective per instance; matching rows are bold.
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.feasible) {
        if let Some(v) = r.objective_binary {
            let e = best.entry(r.instance_id.as_str()).or_insert(v);
            *e = e.min(v);
        }
    }
    let mut out = String::from(
        "| Instance | Method | Objective | Relaxed | Gap (%) | Runtime (s) | Status |\n\
         |---|---|---:|---:|---:|---:|---|\n",
    );
    let fixed = |v: Option<f64>, digits: usize| v.map_or("–".to_string(), |v| format!("{v:.digits$}"));
    for r in reports {
        let mut objective = fixed(r.objective_binary, 4);
        if r.feasible && r.objective_binary.is_some() && r.objective_binary == best.get(r.instance_id.as_str()).copied() {
            objective = format!("**{objective}**");
        }
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.instance_id,
            r.method.label(),
            objective,
            fixed(r.objective_relaxed, 4),
            fixed(r.gap_pct, 2),
            fixed(r.runtime_s, 4),
            r.status
        );
    }
    out.into_bytes()
}

pub fn emit_report(reports: &[SolveReport], format: ReportFormat) -> Result<Vec<u8>> {
    if reports.is_empty() {
        return Err(Error::NonEmptyRequired("report list"));
    }
    match format {
        ReportFormat::Csv => csv(reports),
        ReportFormat::Json => {
            let file = ReportFile {
                schema: REPORT_SCHEMA.to_string(),
                reports: reports.to_vec(),
            };
            let mut bytes = serde_json::to_vec_pretty(&file)?;
            bytes.push(b'\n');
            Ok(bytes)
        }
        ReportFormat::Markdown => Ok(markdown(reports)),
    }
}

/// Reads back the JSON produced by [`emit_report`].
pub fn parse_report_json(bytes: &[u8]) -> Result<Vec<SolveReport>> {
    let file: ReportFile = serde_json::from_slice(bytes)?;
    if file.schema != REPORT_SCHEMA {
        return Err(Error::UnsupportedSchema(file.schema));
    }
    Ok(file.reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Method, Status};

    fn report(id: &str, method: Method, binary: f64) -> SolveReport {
        SolveReport {
            instance_id: id.into(),
            method,
            params: [("mass_scale".to_string(), "9".to_string())].into(),
            objective_relaxed: Some(binary * 0.9),
            objective_binary: Some(binary),
            feasible: true,
            gap_pct: Some(0.1 + 0.2),
            runtime_s: None,
            iterations: 3,
            seed: u64::MAX,
            status: Status::Failed("bad, \"quoted\"".into()),
        marginal_violation: Some(1e-17),
        }
    }

    #[test]
    fn csv_header_and_quoting() {
        let bytes = emit_report(&[report("S1", Method::Fgw { alpha: 0.5 }, 1.0)], ReportFormat::Csv).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "instance_id,method,params,objective_relaxed,objective_binary,feasible,gap_pct,runtime_s,iterations,seed,status"
        );
        assert_eq!(
            lines.next().unwrap(),
            "S1,FGW(0.5),mass_scale=9,0.9,1,true,0.30000000000000004,,3,18446744073709551615,\"failed: bad, \"\"quoted\"\"\""
        );
        assert!(lines.next().is_none());
    }

    #[test]
    fn json_round_trip() {
        let reports = vec![
            report("S1", Method::Egw { epsilon: 0.8 }, 981.6324),
            report("S2", Method::GwMultiInit { trials: 20 }, 1.0 / 3.0),
        ];
        let bytes = emit_report(&reports, ReportFormat::Json).unwrap();
        assert_eq!(parse_report_json(&bytes).unwrap(), reports);
    }

    #[test]
    fn markdown_bolds_best_per_instance() {
        let reports = vec![
            report("S1", Method::Exact, 10.0),
            report("S1", Method::GwDefault, 12.0),
            report("S2", Method::Exact, 20.0),
            report("S2", Method::GwDefault, 20.0),
        ];
        let text = String::from_utf8(emit_report(&reports, ReportFormat::Markdown).unwrap()).unwrap();
        let rows: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].contains("**10.0000**"));
        assert!(!rows[1].contains("**"));
        assert!(rows[2].contains("**20.0000**") && rows[3].contains("**20.0000**"));
    }

    #[test]
    fn format_errors() {
        assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::UnknownFormat(_))));
        assert!(matches!(emit_report(&[], ReportFormat::Csv), Err(Error::NonEmptyRequired(_))));
        assert!(matches!(
            parse_report_json(br#"{"schema":"other","reports":[]}"#),
            Err(Error::UnsupportedSchema(_))
        ));
    }
}

//! Report serialization (CSV and JSON).
//!
//! Floats are written in shortest round-trip form (exponent notation for
//! very small or large magnitudes), so parsing an emitted report gives back
//! the same values bit for bit.

use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::{Decision, IntentReport};

pub const CSV_HEADER: &str = "t,p_return,p_not,T_map,T_std,decision";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("unknown report format `{other}`"))),
        }
    }
}

impl FromStr for Decision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "returning" => Ok(Decision::Returning),
            "not_returning" => Ok(Decision::NotReturning),
            "undecided" => Ok(Decision::Undecided),
            other => Err(Error::invalid(format!("unknown decision `{other}`"))),
        }
    }
}

/// Streams reports one at a time, flushing after each.
pub struct ReportWriter<W: Write> {
    out: W,
    format: ReportFormat,
    written: usize,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(mut out: W, format: ReportFormat) -> Result<Self> {
        match format {
            ReportFormat::Csv => writeln!(out, "{CSV_HEADER}")?,
            ReportFormat::Json => write!(out, "[")?,
        }
        Ok(ReportWriter { out, format, written: 0 })
    }

    pub fn write(&mut self, r: &IntentReport) -> Result<()> {
        match self.format {
            ReportFormat::Csv => writeln!(
                self.out,
                "{:?},{:?},{:?},{:?},{:?},{}",
                r.t,
                r.p_return,
                r.p_not,
                r.t_map,
                r.t_std,
                r.decision.as_str()
            )?,
            ReportFormat::Json => {
                let sep = if self.written == 0 { "\n" } else { ",\n" };
                let obj = serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?;
                write!(self.out, "{sep}  {obj}")?;
            }
        }
        self.written += 1;
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.format == ReportFormat::Json {
            writeln!(self.out, "{}]", if self.written == 0 { "" } else { "\n" })?;
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn emit_report<W: Write>(reports: &[IntentReport], format: ReportFormat, out: W) -> Result<W> {
    if reports.is_empty() {
        return Err(Error::invalid("no reports to emit"));
    }
    let mut w = ReportWriter::new(out, format)?;
    for r in reports {
        w.write(r)?;
    }
    w.finish()
}

pub fn emit_report_string(reports: &[IntentReport], format: ReportFormat) -> Result<String> {
    let bytes = emit_report(reports, format, Vec::new())?;
    Ok(String::from_utf8(bytes).expect("report output is UTF-8"))
}

/// Parse reports back; arrival weights are not serialized and come back empty.
pub fn parse_reports<R: Read>(input: R, format: ReportFormat) -> Result<Vec<IntentReport>> {
    match format {
        ReportFormat::Json => {
            serde_json::from_reader(input).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })
        }
        ReportFormat::Csv => {
            let mut reader = csv::Reader::from_reader(input);
            let header: Vec<String> = reader
                .headers()
                .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
                .iter()
                .map(str::to_owned)
                .collect();
            if header.join(",") != CSV_HEADER {
                return Err(Error::Parse { line: 1, message: format!("unexpected header `{}`", header.join(",")) });
            }
            let mut out = Vec::new();
            for rec in reader.records() {
                let rec = rec.map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
                let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
                let num = |i: usize| rec[i].parse::<f64>().map_err(|e| Error::Parse { line, message: e.to_string() });
                out.push(IntentReport {
                    t: num(0)?,
                    p_return: num(1)?,
                    p_not: num(2)?,
                    t_map: num(3)?,
                    t_std: num(4)?,
                    decision: rec[5].parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?,
                    arrival_weights: Vec::new(),
                });
            }
            Ok(out)
        }
    }
}

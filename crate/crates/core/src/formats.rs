//! File formats: trace, schedule and backlog CSV, JSON and text reports.
//!
//! Trace files are CSV with a header `arrival,class,length`; row order is the
//! global tie order. Lines starting with `#` carry provenance and are kept
//! aside when reading. Exact values are written as `p/q`; decimals appear
//! only in the human-readable text renderings.

use std::fmt::Write as _;
use std::io;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{Applicability, BoundReport};
use crate::rational::Rational;
use crate::sim::{Schedule, StepFunction, Trace, TraceError};
use crate::system::SystemConfig;
use crate::verify::{CheckStatus, VerifyReport};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("schedule row {row} does not match trace packet: {message}")]
    Mismatch { row: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    arrival: String,
    class: usize,
    length: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    arrival: String,
    class: usize,
    length: String,
    departure: String,
    delay: String,
}

#[derive(Debug, Serialize)]
struct BacklogRow {
    time: String,
    bits: String,
}

fn parse_field(value: &str, line: u64, what: &str) -> Result<Rational, FormatError> {
    value.trim().parse::<Rational>().map_err(|e| FormatError::Parse {
        line,
        message: format!("{what}: {e}"),
    })
}

fn write_comments<W: io::Write>(w: &mut W, comments: &[String]) -> io::Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    Ok(())
}

/// Splits leading `#` lines from the CSV body.
fn split_comments(text: &str) -> (Vec<String>, String) {
    let mut comments = Vec::new();
    let mut body = String::with_capacity(text.len());
    for line in text.lines() {
        match line.trim_start().strip_prefix('#') {
            Some(c) => {
                comments.push(c.trim().to_string());
                // keep line numbering stable for error messages
                body.push('\n');
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    (comments, body)
}

fn csv_reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

pub fn write_trace<W: io::Write>(w: W, trace: &Trace, comments: &[String]) -> Result<(), FormatError> {
    let mut w = w;
    write_comments(&mut w, comments)?;
    let mut out = csv::Writer::from_writer(w);
    for p in trace.packets() {
        out.serialize(TraceRow {
            arrival: p.arrival.to_string(),
            class: p.class,
            length: p.length.to_string(),
        })?;
    }
    if trace.is_empty() {
        out.write_record(["arrival", "class", "length"])?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a trace file against `config`; returns the trace and its comment lines.
pub fn read_trace(text: &str, config: Arc<SystemConfig>) -> Result<(Trace, Vec<String>), FormatError> {
    let (comments, body) = split_comments(text);
    let mut rdr = csv_reader(&body);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let row: TraceRow = rec.deserialize(None).map_err(|e| FormatError::Parse {
            line,
            message: e.to_string(),
        })?;
        records.push((
            parse_field(&row.arrival, line, "arrival")?,
            row.class,
            parse_field(&row.length, line, "length")?,
        ));
    }
    Ok((Trace::new(config, records)?, comments))
}

pub fn write_schedule<W: io::Write>(w: W, trace: &Trace, schedule: &Schedule) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    for ((p, d), delay) in trace.packets().iter().zip(schedule.departures()).zip(schedule.delays()) {
        out.serialize(ScheduleRow {
            arrival: p.arrival.to_string(),
            class: p.class,
            length: p.length.to_string(),
            departure: d.to_string(),
            delay: delay.to_string(),
        })?;
    }
    if trace.is_empty() {
        out.write_record(["arrival", "class", "length", "departure", "delay"])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads departures from a schedule file whose rows must repeat `trace`.
/// The delay column is ignored and recomputed.
pub fn read_schedule(text: &str, trace: &Trace) -> Result<Schedule, FormatError> {
    let (_, body) = split_comments(text);
    let mut rdr = csv_reader(&body);
    let mut departures = Vec::with_capacity(trace.len());
    for (row_idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = line_of(&rec);
        let row: ScheduleRow = rec.deserialize(None).map_err(|e| FormatError::Parse {
            line,
            message: e.to_string(),
        })?;
        let p = trace.packets().get(row_idx).ok_or_else(|| FormatError::Mismatch {
            row: row_idx,
            message: "more rows than packets".into(),
        })?;
        let arrival = parse_field(&row.arrival, line, "arrival")?;
        let length = parse_field(&row.length, line, "length")?;
        if arrival != p.arrival || row.class != p.class || length != p.length {
            return Err(FormatError::Mismatch {
                row: row_idx,
                message: format!(
                    "expected ({}, {}, {}), found ({}, {}, {})",
                    p.arrival, p.class, p.length, arrival, row.class, length
                ),
            });
        }
        departures.push(parse_field(&row.departure, line, "departure")?);
    }
    Ok(Schedule::from_departures(trace, departures)?)
}

pub fn write_backlog<W: io::Write>(w: W, backlog: &StepFunction) -> Result<(), FormatError> {
    let mut out = csv::Writer::from_writer(w);
    for (t, v) in &backlog.points {
        out.serialize(BacklogRow {
            time: t.to_string(),
            bits: v.to_string(),
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Pretty JSON with exact `p/q` strings.
pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

/// `exact (≈decimal)`, or just `exact` for integers.
pub fn exact_and_decimal(v: &Rational) -> String {
    if v.is_integer() {
        v.to_string()
    } else {
        format!("{v} (~{})", v.to_decimal_string(6))
    }
}

fn applicability<T>(a: &Applicability<T>, show: impl Fn(&T) -> String) -> String {
    match a {
        Applicability::Applicable(v) => show(v),
        Applicability::NotApplicable(p) => format!("not applicable: {p}"),
    }
}

pub fn render_bounds(report: &BoundReport) -> String {
    let mut s = String::new();
    let u = &report.utilization;
    let _ = writeln!(s, "system {}", report.system);
    let _ = writeln!(s, "  rho = {}", exact_and_decimal(&u.rho));
    for (i, rb) in u.rho_bar.iter().enumerate() {
        let _ = writeln!(s, "  rho_bar({}) = {}", i + 1, exact_and_decimal(rb));
    }
    let g = &report.aggregate.gr;
    let _ = writeln!(s, "aggregate");
    let _ = writeln!(s, "  guaranteed rate {} with error {}", g.rate, g.error);
    let _ = writeln!(s, "  service curve {}", report.aggregate.service_curve);
    for m in &report.methods {
        let _ = writeln!(s, "method {}", m.method);
        let _ = writeln!(s, "  delay bound [s]    {}", applicability(&m.delay, exact_and_decimal));
        let _ = writeln!(
            s,
            "  backlog bound [b]  {}",
            applicability(&m.backlog, |b| exact_and_decimal(b.value()))
        );
        if let Some(b) = m.backlog.value() {
            for (i, part) in b.parts.iter().enumerate() {
                let mark = if i == b.selected() { "*" } else { " " };
                let _ = writeln!(s, "    {mark} {}: {}", part.label, exact_and_decimal(&part.value));
            }
        }
        for c in &m.classes {
            let _ = writeln!(
                s,
                "  class {}: gr {}",
                c.class,
                applicability(&c.gr, |g| format!(
                    "rate {} error {}",
                    exact_and_decimal(&g.rate),
                    exact_and_decimal(&g.error)
                ))
            );
            let _ = writeln!(
                s,
                "  class {}: service curve {}",
                c.class,
                applicability(&c.service_curve, |b| b.to_string())
            );
        }
    }
    if let Some(cmp) = &report.comparison {
        let yn = |v: Option<bool>| v.map_or("n/a", |b| if b { "yes" } else { "no" });
        let _ = writeln!(s, "comparison");
        let _ = writeln!(s, "  improved delay <= direct delay: {}", yn(cmp.delay_not_worse));
        let _ = writeln!(s, "  improved backlog <= direct backlog: {}", yn(cmp.backlog_not_worse));
        for c in &cmp.classes {
            let _ = writeln!(
                s,
                "  class {}: improved curve dominates direct: {}",
                c.class,
                yn(c.service_curve_dominates)
            );
        }
    }
    s
}

pub fn render_verify(report: &VerifyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "system {}: {} packets", report.system, report.packets);
    for r in &report.results {
        match &r.status {
            CheckStatus::Checked(o) => {
                let margin = o.min_margin.as_ref().map_or("-".to_string(), exact_and_decimal);
                let verdict = if !o.passed() {
                    format!("FAIL ({} violations)", o.violations.len())
                } else if o.tight() {
                    "ok, tight".to_string()
                } else {
                    "ok".to_string()
                };
                let _ = writeln!(
                    s,
                    "  {:<12} {:<18} {:<22} evaluated {:>7}  min margin {}",
                    r.check,
                    r.subject.to_string(),
                    verdict,
                    o.evaluated,
                    margin
                );
                for v in o.violations.iter().take(5) {
                    let _ = writeln!(
                        s,
                        "      {} at {}: observed {} bound {} margin {}",
                        v.kind, v.location, v.observed, v.bound, v.margin
                    );
                }
                if o.violations.len() > 5 {
                    let _ = writeln!(s, "      ... {} more", o.violations.len() - 5);
                }
            }
            CheckStatus::NotApplicable { reason } => {
                let _ = writeln!(s, "  {:<12} {:<18} skipped: {}", r.check, r.subject.to_string(), reason);
            }
        }
    }
    let n = report.violation_count();
    let _ = writeln!(s, "{}", if n == 0 { "no violations".to_string() } else { format!("{n} violations") });
    s
}

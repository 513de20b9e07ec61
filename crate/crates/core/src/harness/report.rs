//! Tabular reports over run records. CSV is always produced; SVG on request.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GemError, Result};
use crate::harness::svg::{line_chart, Series};
use crate::record::RunRecord;

/// One `(run, metric, value)` row; the long format used by every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(run: &str, metric: impl Into<String>, value: f64) -> Self {
        Self {
            run: run.to_string(),
            metric: metric.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    SummaryCsv,
    PassAtKCurve,
    EntropyTable,
    DistanceCurve,
}

impl ReportKind {
    pub const ALL: [ReportKind; 4] = [
        ReportKind::SummaryCsv,
        ReportKind::PassAtKCurve,
        ReportKind::EntropyTable,
        ReportKind::DistanceCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::SummaryCsv => "summary-csv",
            ReportKind::PassAtKCurve => "pass-at-k-curve",
            ReportKind::EntropyTable => "entropy-table",
            ReportKind::DistanceCurve => "distance-curve",
        }
    }
}

impl FromStr for ReportKind {
    type Err = GemError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GemError::InvalidInput(format!("unknown report kind {s:?}")))
    }
}

/// Final metrics (and pass@k) of each record, one row per metric.
pub fn metric_rows(records: &[RunRecord]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for r in records {
        for (name, value) in &r.final_metrics {
            rows.push(MetricRow::new(&r.cell, name.clone(), *value));
        }
        for (k, value) in &r.pass_at_k {
            rows.push(MetricRow::new(&r.cell, format!("pass@{k}"), *value));
        }
    }
    rows
}

/// pass@k curve per run; errors if any curve decreases in k.
pub fn pass_at_k_rows(records: &[RunRecord]) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for r in records {
        let mut prev = f64::NEG_INFINITY;
        for (k, v) in &r.pass_at_k {
            if *v < prev {
                return Err(GemError::Precondition(format!(
                    "pass@k of run {} decreases at k = {k}",
                    r.cell
                )));
            }
            prev = *v;
            rows.push(MetricRow::new(&r.cell, format!("pass@{k}"), *v));
        }
    }
    Ok(rows)
}

fn per_epoch(records: &[RunRecord], name: &str, pick: fn(&crate::record::StepScalars) -> f64) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for r in records {
        for e in &r.epochs {
            rows.push(MetricRow::new(&r.cell, format!("{name}@epoch{}", e.epoch), pick(e)));
        }
        if let Some(v) = r.final_metrics.get(name) {
            rows.push(MetricRow::new(&r.cell, name, *v));
        }
    }
    rows
}

/// Rows of a report. Failed runs are skipped; an empty record list is an
/// error.
pub fn build_report(records: &[RunRecord], kind: ReportKind) -> Result<Vec<MetricRow>> {
    if records.is_empty() {
        return Err(GemError::InvalidInput("no run records to report".into()));
    }
    let ok: Vec<RunRecord> = records.iter().filter(|r| r.is_ok()).cloned().collect();
    Ok(match kind {
        ReportKind::SummaryCsv => metric_rows(&ok),
        ReportKind::PassAtKCurve => pass_at_k_rows(&ok)?,
        ReportKind::EntropyTable => per_epoch(&ok, "mean_conditional_entropy", |s| s.entropy),
        ReportKind::DistanceCurve => per_epoch(&ok, "param_distance", |s| s.param_distance),
    })
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_csv_string(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| GemError::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    parse_metrics_csv(&std::fs::read_to_string(path)?)
}

/// Wide table: one line per run, one column per metric (blank when absent).
pub fn write_summary_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let rows = metric_rows(records);
    let mut metrics: Vec<&str> = rows.iter().map(|r| r.metric.as_str()).collect();
    metrics.sort();
    metrics.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["run", "status"];
    header.extend(&metrics);
    w.write_record(&header)?;
    for r in records {
        let values: BTreeMap<&str, f64> = rows
            .iter()
            .filter(|row| row.run == r.cell)
            .map(|row| (row.metric.as_str(), row.value))
            .collect();
        let status = if r.is_ok() { "ok" } else { "failed" };
        let mut line = vec![r.cell.clone(), status.to_string()];
        line.extend(
            metrics
                .iter()
                .map(|m| values.get(m).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

fn curve_series(rows: &[MetricRow], prefix: &str) -> Vec<Series> {
    let mut by_run: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        if let Some(x) = row.metric.strip_prefix(prefix).and_then(|x| x.parse::<f64>().ok()) {
            by_run.entry(&row.run).or_default().push((x, row.value));
        }
    }
    by_run
        .into_iter()
        .map(|(name, points)| Series {
            name: name.to_string(),
            points,
        })
        .collect()
}

/// SVG chart for curve-shaped reports; `None` for the plain summary.
pub fn report_svg(rows: &[MetricRow], kind: ReportKind) -> Option<String> {
    let (prefix, title, x_label, y_label, log_x) = match kind {
        ReportKind::SummaryCsv => return None,
        ReportKind::PassAtKCurve => ("pass@", "pass@k", "k", "pass@k", true),
        ReportKind::EntropyTable => (
            "mean_conditional_entropy@epoch",
            "entropy by epoch",
            "epoch",
            "nats",
            false,
        ),
        ReportKind::DistanceCurve => (
            "param_distance@epoch",
            "distance from initialization",
            "epoch",
            "l2 distance",
            false,
        ),
    };
    Some(line_chart(title, x_label, y_label, &curve_series(rows, prefix), log_x))
}

/// Writes `<kind>.csv` (and `<kind>.svg` when asked) into `dir`; returns the
/// paths written.
pub fn report(records: &[RunRecord], kind: ReportKind, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let rows = build_report(records, kind)?;
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", kind.name()));
    write_metrics_csv(&csv_path, &rows)?;
    let mut written = vec![csv_path];
    if svg {
        if let Some(doc) = report_svg(&rows, kind) {
            let svg_path = dir.join(format!("{}.svg", kind.name()));
            std::fs::write(&svg_path, doc)?;
            written.push(svg_path);
        }
    }
    Ok(written)
}

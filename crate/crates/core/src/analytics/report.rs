//! Consolidated report: JSON document, stage retention table and histogram
//! CSVs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::taxonomy::Taxonomy;
use super::{density_labels, CorpusStats, Histogram};
use crate::fsutil::write_json;
use crate::model::StageReport;

pub fn megabytes(bytes: u64) -> String {
    format!("{:.2}", bytes as f64 / 1e6)
}

pub fn format_retention(percent: Option<f64>) -> String {
    percent.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub stage: String,
    pub description: String,
    pub input_files: u64,
    pub output_files: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub retained_percent: Option<f64>,
    pub common_reasons: Vec<(String, usize)>,
}

impl StageRow {
    pub fn from_report(r: &StageReport) -> Self {
        StageRow {
            stage: r.stage.label().to_string(),
            description: r.stage.summary().to_string(),
            input_files: r.input_count,
            output_files: r.output_count,
            input_bytes: r.input_bytes,
            output_bytes: r.output_bytes,
            retained_percent: r.retention_percent(),
            common_reasons: r.common_reasons(3),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsolidatedReport<'a, T> {
    pub stages: Vec<StageRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<&'a CorpusStats<T>>,
}

/// Text table with one row per stage.
pub fn render_table(reports: &[StageReport]) -> String {
    let header = [
        "Stage",
        "Description",
        "Input (MB)",
        "Output (MB)",
        "% Retained",
        "Common rejection reasons",
    ];
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            let reasons = r
                .common_reasons(3)
                .into_iter()
                .map(|(reason, n)| format!("{reason} ({n})"))
                .collect::<Vec<_>>()
                .join("; ");
            [
                r.stage.label().to_string(),
                r.stage.summary().to_string(),
                megabytes(r.input_bytes),
                megabytes(r.output_bytes),
                format_retention(r.retention_percent()),
                if reasons.is_empty() {
                    "-".into()
                } else {
                    reasons
                },
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[&str]| -> String {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            // Numeric columns right-aligned.
            if (2..=4).contains(&i) {
                let _ = write!(s, "{cell:>w$}");
            } else if i + 1 == cells.len() {
                s.push_str(cell);
            } else {
                let _ = write!(s, "{cell:<w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        out.push_str(&line(&cells));
        out.push('\n');
    }
    out
}

fn histogram_csv(h: &Histogram) -> String {
    let mut s = String::from("bucket,count\n");
    for (label, n) in h.labels.iter().zip(&h.counts) {
        let _ = writeln!(s, "\"{label}\",{n}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub table: PathBuf,
    pub histograms: Vec<PathBuf>,
}

/// Writes `report.json`, `table1.txt` and, with statistics, `hist_*.csv`
/// into `out_dir`.
pub fn render_report<T: Serialize>(
    stats: Option<&CorpusStats<T>>,
    reports: &[StageReport],
    out_dir: &Path,
) -> io::Result<ReportFiles> {
    fs::create_dir_all(out_dir)?;
    let doc = ConsolidatedReport {
        stages: reports.iter().map(StageRow::from_report).collect(),
        stats,
    };
    let json = out_dir.join("report.json");
    write_json(&json, &doc)?;
    let table = out_dir.join("table1.txt");
    fs::write(&table, render_table(reports))?;

    let mut histograms = Vec::new();
    if let Some(s) = stats {
        let density = Histogram {
            labels: density_labels(),
            counts: s.comments.buckets.clone(),
        };
        for (name, h) in [
            ("lines", &s.lines.histogram),
            ("tokens", &s.tokens.histogram),
            ("ports", &s.ports.histogram),
            ("density", &density),
        ] {
            let path = out_dir.join(format!("hist_{name}.csv"));
            fs::write(&path, histogram_csv(h))?;
            histograms.push(path);
        }
        let taxonomy = Taxonomy::builtin();
        let mut csv = String::from("class,name,count\n");
        for (i, n) in s.classes.iter().enumerate() {
            let id = i as u8 + 1;
            let _ = writeln!(csv, "{id},\"{}\",{n}", taxonomy.name(id).unwrap_or(""));
        }
        let path = out_dir.join("hist_classes.csv");
        fs::write(&path, csv)?;
        histograms.push(path);
    }
    Ok(ReportFiles {
        json,
        table,
        histograms,
    })
}

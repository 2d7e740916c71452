//! Prompt/response pairs for instruction tuning, filtered by a context
//! window budget on the response code tokens.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{BitWidth, ModuleRecord, PortSpec};
use crate::store::{ModuleStore, QueryFilter, StoreError};

pub const SYSTEM_PROMPT: &str = "You are a highly experienced RTL code designer skilled at designing concise, syntactically correct, and synthesizable Verilog code that functions.";

/// Port line used for modules with no ports.
pub const NO_PORTS: &str = "(no ports)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub prompt: String,
    pub response: String,
    pub source_id: i64,
    pub token_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Mistral7b,
    CodeLlama7b,
}

impl Preset {
    pub fn budget(self) -> u64 {
        match self {
            Preset::Mistral7b => 8192,
            Preset::CodeLlama7b => 4096,
        }
    }

    pub fn parse(name: &str) -> Option<Preset> {
        match name.to_ascii_lowercase().as_str() {
            "mistral7b" | "mistral-7b" => Some(Preset::Mistral7b),
            "codellama7b" | "codellama-7b" => Some(Preset::CodeLlama7b),
            _ => None,
        }
    }
}

fn render_port(p: &PortSpec) -> String {
    match &p.bit_width {
        BitWidth::Resolved(w) if *w > 1 => format!("{} [{}:0] {}", p.direction, w - 1, p.name),
        BitWidth::Resolved(_) => format!("{} {}", p.direction, p.name),
        BitWidth::Unresolved(expr) => format!("{} {} {}", p.direction, expr, p.name),
    }
}

pub fn port_line(ports: &[PortSpec]) -> String {
    if ports.is_empty() {
        return NO_PORTS.to_string();
    }
    ports.iter().map(render_port).collect::<Vec<_>>().join(", ")
}

pub fn format_pair(source_id: i64, record: &ModuleRecord) -> InstructionPair {
    let prompt = format!(
        "{SYSTEM_PROMPT}\n\nGenerate Verilog code for a module named {} with the following ports and description:\n\n{}\n\n{}",
        record.module_name,
        port_line(&record.ports),
        record.description
    );
    InstructionPair {
        prompt,
        response: record.verilog_code.clone(),
        source_id,
        token_count: record.token_count,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExportCounts {
    pub emitted: u64,
    pub skipped: u64,
}

/// Pairs whose code token count fits the budget, in row id order.
pub fn select_pairs(
    store: &mut dyn ModuleStore,
    budget: u64,
) -> Result<(Vec<InstructionPair>, u64), StoreError> {
    let rows = store.query_modules(&QueryFilter::default())?;
    let total = rows.len() as u64;
    let pairs: Vec<InstructionPair> = rows
        .par_iter()
        .filter(|m| m.record.token_count <= budget)
        .map(|m| format_pair(m.id, &m.record))
        .collect();
    let skipped = total - pairs.len() as u64;
    Ok((pairs, skipped))
}

/// Writes one JSON pair per line to `out`.
pub fn export_pairs(
    store: &mut dyn ModuleStore,
    budget: u64,
    out: &Path,
) -> Result<ExportCounts, StoreError> {
    let (pairs, skipped) = select_pairs(store, budget)?;
    let io = |e| StoreError::Io {
        path: out.display().to_string(),
        source: e,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut w = BufWriter::new(fs::File::create(out).map_err(io)?);
    for pair in &pairs {
        let line = serde_json::to_string(pair).expect("pair serializes");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(ExportCounts {
        emitted: pairs.len() as u64,
        skipped,
    })
}

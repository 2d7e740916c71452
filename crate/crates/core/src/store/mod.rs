//! Relational module store and the final validation gate.
//!
//! Two tables: `verilog_modules` (unique `verilog_code`) and `module_ports`
//! (cascade delete, unique `(module_id, port_name)`). A record is inserted
//! with all its ports in one transaction or not at all.

#[cfg(feature = "postgres")]
mod postgres;
mod sqlite;

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ExtractedModule;
use crate::model::{
    deserialize_record, serialize_record_line, BitWidth, ModuleRecord, StageReport,
};

#[cfg(feature = "postgres")]
pub use self::postgres::PostgresStore;
pub use sqlite::SqliteStore;

/// Environment variable naming the store location.
pub const DB_URL_ENV: &str = "FORGE_DB_URL";

pub const DUPLICATE_CODE: &str = "duplicate verilog_code";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("StoreUnavailable: {0}")]
    Unavailable(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl StoreError {
    pub(crate) fn unavailable(err: impl std::fmt::Display) -> Self {
        StoreError::Unavailable(err.to_string())
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted(i64),
    Rejected(String),
}

impl InsertOutcome {
    pub fn id(&self) -> Option<i64> {
        match self {
            InsertOutcome::Inserted(id) => Some(*id),
            InsertOutcome::Rejected(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Substrings of module names allowed to have no ports.
    pub portless_exemptions: Vec<String>,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            portless_exemptions: vec!["filler".into(), "decap".into(), "wrapper_empty".into()],
        }
    }
}

impl StoreConfig {
    pub fn is_exempt(&self, module_name: &str) -> bool {
        let name = module_name.to_lowercase();
        self.portless_exemptions
            .iter()
            .any(|e| name.contains(&e.to_lowercase()))
    }
}

/// Rules checked before touching the store. Duplicate code is left to the
/// unique constraint.
pub fn precheck(record: &ModuleRecord, config: &StoreConfig) -> Result<(), String> {
    if let Err(e) = record.validate() {
        return Err(format!("invalid record: {e}"));
    }
    if record.ports.is_empty() && !config.is_exempt(&record.module_name) {
        return Err("no ports captured".into());
    }
    if let Some(p) = record
        .ports
        .iter()
        .find(|p| matches!(p.bit_width, BitWidth::Unresolved(_)))
    {
        let BitWidth::Unresolved(expr) = &p.bit_width else {
            unreachable!()
        };
        return Err(format!("unresolved width on port {}: {expr}", p.name));
    }
    let mut seen = BTreeSet::new();
    if let Some(p) = record.ports.iter().find(|p| !seen.insert(p.name.as_str())) {
        return Err(format!("duplicate port name {}", p.name));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryFilter {
    /// Substring of the module name.
    pub name_pattern: Option<String>,
    /// Inclusive token-count bounds.
    pub tokens: Option<(u64, u64)>,
    /// Inclusive port-count bounds.
    pub ports: Option<(u64, u64)>,
    pub has_comments: Option<bool>,
}

impl QueryFilter {
    pub fn matches(&self, record: &ModuleRecord) -> bool {
        let in_range = |v: u64, r: Option<(u64, u64)>| r.is_none_or(|(lo, hi)| lo <= v && v <= hi);
        self.name_pattern
            .as_deref()
            .is_none_or(|p| record.module_name.contains(p))
            && in_range(record.token_count, self.tokens)
            && in_range(record.ports.len() as u64, self.ports)
            && self
                .has_comments
                .is_none_or(|c| c == !record.comments.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredModule {
    pub id: i64,
    pub record: ModuleRecord,
}

/// Minimal relational interface implemented by each backend.
pub trait ModuleStore: Send {
    /// Creates both tables if missing.
    fn init_schema(&mut self) -> Result<(), StoreError>;
    /// Drops all rows.
    fn reset(&mut self) -> Result<(), StoreError>;
    fn insert_record(&mut self, record: &ModuleRecord) -> Result<InsertOutcome, StoreError>;
    /// Records in id order.
    fn query_modules(&mut self, filter: &QueryFilter) -> Result<Vec<StoredModule>, StoreError>;
    fn delete_module(&mut self, id: i64) -> Result<bool, StoreError>;
    /// `(module rows, port rows)`.
    fn row_counts(&mut self) -> Result<(u64, u64), StoreError>;
}

/// Opens a store from a URL: `postgres://…` / `postgresql://…` for a server
/// (with the `postgres` feature), `sqlite://path`, `:memory:` or a bare path
/// for the embedded store.
pub fn open_store(url: &str, config: StoreConfig) -> Result<Box<dyn ModuleStore>, StoreError> {
    if url.starts_with("postgres://") || url.starts_with("postgresql://") {
        #[cfg(feature = "postgres")]
        return Ok(Box::new(PostgresStore::connect(url, config)?));
        #[cfg(not(feature = "postgres"))]
        return Err(StoreError::Unavailable(
            "built without the postgres feature".into(),
        ));
    }
    let path = url.strip_prefix("sqlite://").unwrap_or(url);
    let store = if path == ":memory:" {
        SqliteStore::in_memory(config)?
    } else {
        SqliteStore::open(Path::new(path), config)?
    };
    Ok(Box::new(store))
}

pub(crate) fn join_comments(comments: &[String]) -> Option<String> {
    (!comments.is_empty()).then(|| comments.join("\n"))
}

pub(crate) fn split_comments(column: Option<String>) -> Vec<String> {
    column
        .map(|c| {
            c.split('\n')
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Writes every stored record as one JSON line. Returns the line count.
pub fn export_jsonl(store: &mut dyn ModuleStore, path: &Path) -> Result<u64, StoreError> {
    let rows = store.query_modules(&QueryFilter::default())?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| StoreError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in &rows {
        writeln!(out, "{}", serialize_record_line(&row.record))
            .map_err(|e| StoreError::io(path, e))?;
    }
    out.flush().map_err(|e| StoreError::io(path, e))?;
    Ok(rows.len() as u64)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImportCounts {
    pub lines: u64,
    pub inserted: u64,
    /// `(1-based line number, reason)`.
    pub rejected: Vec<(u64, String)>,
}

/// Inserts each non-blank line through the full validation path.
pub fn import_jsonl(store: &mut dyn ModuleStore, path: &Path) -> Result<ImportCounts, StoreError> {
    let file = fs::File::open(path).map_err(|e| StoreError::io(path, e))?;
    let mut counts = ImportCounts::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| StoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        counts.lines += 1;
        let lineno = n as u64 + 1;
        match deserialize_record(&line) {
            Ok(record) => match store.insert_record(&record)? {
                InsertOutcome::Inserted(_) => counts.inserted += 1,
                InsertOutcome::Rejected(reason) => counts.rejected.push((lineno, reason)),
            },
            Err(e) => counts.rejected.push((lineno, e.to_string())),
        }
    }
    Ok(counts)
}

/// Inserts every `*.json` record file of a directory in name order.
pub fn import_json_dir(
    store: &mut dyn ModuleStore,
    dir: &Path,
) -> Result<ImportCounts, StoreError> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| StoreError::io(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut counts = ImportCounts::default();
    for (n, path) in paths.iter().enumerate() {
        counts.lines += 1;
        let text = fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
        match deserialize_record(&text) {
            Ok(record) => match store.insert_record(&record)? {
                InsertOutcome::Inserted(_) => counts.inserted += 1,
                InsertOutcome::Rejected(reason) => counts.rejected.push((n as u64 + 1, reason)),
            },
            Err(e) => counts.rejected.push((n as u64 + 1, e.to_string())),
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone)]
pub struct DbStageOutput {
    /// Accepted modules with their row ids.
    pub inserted: Vec<(i64, ExtractedModule)>,
    pub report: StageReport,
}

/// Final gate: inserts extracted modules in order. `report` carries the
/// extraction counts and failures; output counts are files with at least
/// one accepted module and the code bytes of accepted modules.
pub fn run_db_stage(
    store: &mut dyn ModuleStore,
    modules: Vec<ExtractedModule>,
    mut report: StageReport,
) -> Result<DbStageOutput, StoreError> {
    let mut inserted = Vec::new();
    let mut files = BTreeSet::new();
    for module in modules {
        match store.insert_record(&module.record)? {
            InsertOutcome::Inserted(id) => {
                files.insert(module.source_path.clone());
                report.output_bytes += module.record.verilog_code.len() as u64;
                inserted.push((id, module));
            }
            InsertOutcome::Rejected(reason) => {
                report.reject(
                    format!("{}#{}", module.source_path, module.record.module_name),
                    reason,
                );
            }
        }
    }
    report.output_count = files.len() as u64;
    report.canonicalize();
    Ok(DbStageOutput { inserted, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Direction, PortSpec};

    pub(crate) fn dec() -> ModuleRecord {
        ModuleRecord {
            module_name: "dec".into(),
            ports: vec![
                PortSpec::new("I", Direction::Input, 2),
                PortSpec::new("v", Direction::Input, 1),
                PortSpec::new("y", Direction::Output, 4),
            ],
            comments: vec![],
            verilog_code: "module dec(input [1:0] I, input v, output reg [3:0] y); endmodule"
                .into(),
            token_count: 12,
            description: "Decodes a two-bit input.".into(),
        }
    }

    #[test]
    fn prechecks() {
        let cfg = StoreConfig::default();
        assert!(precheck(&dec(), &cfg).is_ok());
        let portless = ModuleRecord {
            ports: vec![],
            ..dec()
        };
        assert_eq!(precheck(&portless, &cfg).unwrap_err(), "no ports captured");
        let exempt = ModuleRecord {
            module_name: "decap_filler_wrapper".into(),
            ..portless
        };
        assert!(precheck(&exempt, &cfg).is_ok());
        let mut unresolved = dec();
        unresolved.ports[0].bit_width = BitWidth::Unresolved("[W-1:0]".into());
        assert!(precheck(&unresolved, &cfg)
            .unwrap_err()
            .starts_with("unresolved width"));
        let mut dup = dec();
        dup.ports[1].name = "I".into();
        assert_eq!(precheck(&dup, &cfg).unwrap_err(), "duplicate port name I");
    }

    #[test]
    fn filter_matching() {
        let r = dec();
        assert!(QueryFilter::default().matches(&r));
        let f = QueryFilter {
            name_pattern: Some("de".into()),
            tokens: Some((0, 200)),
            ports: Some((3, 3)),
            has_comments: Some(false),
        };
        assert!(f.matches(&r));
        assert!(!QueryFilter {
            tokens: Some((13, 12)),
            ..Default::default()
        }
        .matches(&r));
    }

    #[test]
    fn open_store_urls() {
        assert!(open_store(":memory:", StoreConfig::default()).is_ok());
        assert!(open_store(
            "sqlite:///nonexistent-dir/x/forge.db",
            StoreConfig::default()
        )
        .is_err());
        #[cfg(not(feature = "postgres"))]
        assert!(matches!(
            open_store("postgres://localhost/db", StoreConfig::default()),
            Err(StoreError::Unavailable(_))
        ));
    }
}

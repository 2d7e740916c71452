//! Shared domain types and the canonical module-record JSON format.
//!
//! Every stage of the pipeline consumes or produces these types. The record
//! JSON uses a fixed key order (`module_name`, `ports`, `comments`,
//! `verilog_code`, `token_count`, `description`) so golden files stay
//! byte-stable.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of words allowed in a module description.
pub const MAX_DESCRIPTION_WORDS: usize = 40;

/// Where a project was collected from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Origin {
    GitHub,
    OpenCores,
    Academic,
    #[default]
    Other,
    #[serde(untagged)]
    Named(String),
}

impl Origin {
    pub fn parse(label: &str) -> Origin {
        match label.to_ascii_lowercase().as_str() {
            "github" => Origin::GitHub,
            "opencores" => Origin::OpenCores,
            "academic" => Origin::Academic,
            "" | "other" => Origin::Other,
            _ => Origin::Named(label.to_string()),
        }
    }
}

/// Identifier of a project unit; the name of the project's top directory.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectId(pub String);

impl fmt::Display for ProjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProjectId {
    fn from(s: &str) -> Self {
        ProjectId(s.to_string())
    }
}

/// A candidate Verilog source file.
///
/// `path` is relative to the stage root and always uses `/` as separator; its
/// first segment is the project directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub content: Vec<u8>,
    pub origin: Origin,
    pub project_id: ProjectId,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, content: impl Into<Vec<u8>>) -> Self {
        let path = normalize_path(&path.into());
        let project_id = ProjectId(
            path.split('/')
                .next()
                .filter(|_| path.contains('/'))
                .unwrap_or("")
                .to_string(),
        );
        SourceFile {
            path,
            content: content.into(),
            origin: Origin::Other,
            project_id,
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    /// Content decoded as UTF-8, invalid sequences replaced by U+FFFD.
    pub fn text(&self) -> Cow<'_, str> {
        String::from_utf8_lossy(&self.content)
    }

    pub fn file_name(&self) -> &str {
        self.path.rsplit('/').next().unwrap_or(&self.path)
    }

    pub fn len(&self) -> u64 {
        self.content.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }
}

/// Collapses `\` separators, duplicate slashes and `./` segments.
pub fn normalize_path(path: &str) -> String {
    path.replace('\\', "/")
        .split('/')
        .filter(|seg| !seg.is_empty() && *seg != ".")
        .collect::<Vec<_>>()
        .join("/")
}

/// A group of files sharing one project directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectUnit {
    pub project_id: ProjectId,
    pub root: PathBuf,
    pub files: Vec<SourceFile>,
    pub notes: Option<String>,
}

impl ProjectUnit {
    pub fn total_bytes(&self) -> u64 {
        self.files.iter().map(SourceFile::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        }
    }

    pub fn parse(s: &str) -> Option<Direction> {
        match s {
            "input" => Some(Direction::Input),
            "output" => Some(Direction::Output),
            "inout" => Some(Direction::Inout),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Port width: a resolved wire count, or the range text that could not be
/// evaluated. Serialized as a JSON integer or string respectively.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BitWidth {
    Resolved(u32),
    Unresolved(String),
}

impl BitWidth {
    pub fn resolved(&self) -> Option<u32> {
        match self {
            BitWidth::Resolved(w) => Some(*w),
            BitWidth::Unresolved(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub name: String,
    pub direction: Direction,
    pub bit_width: BitWidth,
}

impl PortSpec {
    pub fn new(name: impl Into<String>, direction: Direction, width: u32) -> Self {
        PortSpec {
            name: name.into(),
            direction,
            bit_width: BitWidth::Resolved(width),
        }
    }
}

/// One extracted module.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleRecord {
    pub module_name: String,
    pub ports: Vec<PortSpec>,
    pub comments: Vec<String>,
    pub verilog_code: String,
    pub token_count: u64,
    pub description: String,
}

pub const RECORD_KEYS: [&str; 6] = [
    "module_name",
    "ports",
    "comments",
    "verilog_code",
    "token_count",
    "description",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

impl ModuleRecord {
    /// Checks the record-level invariants. The portless rule is enforced by
    /// the store, which owns the exemption list.
    pub fn validate(&self) -> Result<(), RecordError> {
        let bad = |msg: String| Err(RecordError::InvariantViolation(msg));
        if self.module_name.trim().is_empty() {
            return bad("module_name is empty".into());
        }
        for port in &self.ports {
            if port.name.trim().is_empty() {
                return bad("port with empty name".into());
            }
            if port.bit_width == BitWidth::Resolved(0) {
                return bad(format!("port `{}` has zero width", port.name));
            }
        }
        for comment in &self.comments {
            if comment.is_empty() || comment.contains('\n') {
                return bad("comments must be non-empty single lines".into());
            }
        }
        if self.verilog_code.is_empty() {
            return bad("verilog_code is empty".into());
        }
        check_description(&self.description).map_err(RecordError::InvariantViolation)
    }

    pub fn port_count(&self) -> usize {
        self.ports.len()
    }
}

/// Checks the description contract: non-empty, at most forty words, ends
/// with a period.
pub fn check_description(text: &str) -> Result<(), String> {
    let words = text.split_whitespace().count();
    if words == 0 {
        return Err("description is empty".into());
    }
    if words > MAX_DESCRIPTION_WORDS {
        return Err(format!(
            "description has {words} words (max {MAX_DESCRIPTION_WORDS})"
        ));
    }
    if !text.trim_end().ends_with('.') {
        return Err("description does not end with a period".into());
    }
    Ok(())
}

/// Pretty JSON with the canonical key order.
pub fn serialize_record(record: &ModuleRecord) -> String {
    serde_json::to_string_pretty(record).expect("record serialization is infallible")
}

/// Single-line JSON, used for JSONL exports.
pub fn serialize_record_line(record: &ModuleRecord) -> String {
    serde_json::to_string(record).expect("record serialization is infallible")
}

pub fn deserialize_record(text: &str) -> Result<ModuleRecord, RecordError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| RecordError::MalformedJson(e.to_string()))?;
    let object = value
        .as_object()
        .ok_or_else(|| RecordError::MalformedJson("expected a JSON object".into()))?;
    for key in RECORD_KEYS {
        if !object.contains_key(key) {
            return Err(RecordError::MissingField(key.to_string()));
        }
    }
    if let Some(extra) = object.keys().find(|k| !RECORD_KEYS.contains(&k.as_str())) {
        return Err(RecordError::MalformedJson(format!(
            "unknown field `{extra}`"
        )));
    }
    let record: ModuleRecord =
        serde_json::from_value(value).map_err(|e| RecordError::MalformedJson(e.to_string()))?;
    record.validate()?;
    Ok(record)
}

/// Assigns `<module_name>.json` file names, appending `-<n>` on collision.
#[derive(Debug, Default)]
pub struct RecordFileNamer {
    used: HashSet<String>,
}

impl RecordFileNamer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_name(&mut self, module_name: &str) -> String {
        let stem: String = module_name
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        let stem = if stem.is_empty() {
            "module".to_string()
        } else {
            stem
        };
        let mut candidate = format!("{stem}.json");
        let mut n = 1;
        while !self.used.insert(candidate.to_ascii_lowercase()) {
            candidate = format!("{stem}-{n}.json");
            n += 1;
        }
        candidate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Filter,
    Dedup,
    Syntax,
    Synthesis,
    DbValidation,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Filter,
        Stage::Dedup,
        Stage::Syntax,
        Stage::Synthesis,
        Stage::DbValidation,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Filter => "Initial Filtering",
            Stage::Dedup => "Deduplication",
            Stage::Syntax => "Syntax Check",
            Stage::Synthesis => "Synthesis Check",
            Stage::DbValidation => "DB Validation",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Stage::Filter => "Drops netlists, testbenches and simulation files",
            Stage::Dedup => "Keeps one copy of byte-identical files",
            Stage::Syntax => "Drops files the compiler cannot parse",
            Stage::Synthesis => "Keeps projects that map to gates",
            Stage::DbValidation => "Keeps modules accepted by the schema gates",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rejection {
    pub path: String,
    pub reason: String,
}

impl Rejection {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Rejection {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Per-stage accounting of counts, bytes and rejection reasons.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub input_count: u64,
    pub output_count: u64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub rejections: Vec<Rejection>,
    /// Non-rejecting flags raised during the stage.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<Rejection>,
}

impl StageReport {
    pub fn new(stage: Stage) -> Self {
        StageReport {
            stage,
            input_count: 0,
            output_count: 0,
            input_bytes: 0,
            output_bytes: 0,
            rejections: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// `100 * output_bytes / input_bytes`, or `None` for an empty input.
    pub fn retention_percent(&self) -> Option<f64> {
        (self.input_bytes > 0).then(|| 100.0 * self.output_bytes as f64 / self.input_bytes as f64)
    }

    pub fn count_retention_percent(&self) -> Option<f64> {
        (self.input_count > 0).then(|| 100.0 * self.output_count as f64 / self.input_count as f64)
    }

    pub fn reject(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.rejections.push(Rejection::new(path, reason));
    }

    pub fn note(&mut self, path: impl Into<String>, note: impl Into<String>) {
        self.notes.push(Rejection::new(path, note));
    }

    /// Sorts rejections and notes canonically by path then reason.
    pub fn canonicalize(&mut self) {
        self.rejections.sort();
        self.notes.sort();
    }

    pub fn is_consistent(&self) -> bool {
        self.output_count <= self.input_count && self.output_bytes <= self.input_bytes
    }

    /// Rejection reasons ranked by frequency, keyed on the text before the
    /// first `:` so per-file detail does not split categories.
    pub fn common_reasons(&self, limit: usize) -> Vec<(String, usize)> {
        let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
        for r in &self.rejections {
            let key = r.reason.split(':').next().unwrap_or("").trim().to_string();
            *counts.entry(key).or_default() += 1;
        }
        let mut ranked: Vec<_> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(limit);
        ranked
    }
}

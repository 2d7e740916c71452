//! Path- and content-keyword exclusion of netlists, testbenches and
//! simulation artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::{is_verilog_path, sorted_children};
use crate::model::{
    normalize_path, Origin, ProjectId, ProjectUnit, SourceFile, Stage, StageReport,
};
use crate::scan::{mask, Mask};

/// Name of the optional per-project file holding the origin label.
pub const ORIGIN_FILE: &str = ".forge-origin";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Case-insensitive keywords matched at token boundaries in any path
    /// segment.
    pub path_excludes: Vec<String>,
    /// Case-insensitive file name suffixes.
    pub suffix_excludes: Vec<String>,
    /// Case-sensitive substrings searched in comment-free content.
    pub content_excludes: Vec<String>,
    /// Members of `content_excludes` that only flag a file. They reject only
    /// when some other content marker also matches.
    pub soft_content_markers: Vec<String>,
    pub testbench_markers: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        FilterConfig {
            path_excludes: strings(&["sim", "simulate", "waveform", "_test"]),
            suffix_excludes: strings(&["_netlist.v", "_gate.v", "_mapped.v", "_synth.v"]),
            content_excludes: strings(&["$display", "initial", "waveform.vcd", "dumpfile"]),
            soft_content_markers: strings(&["initial"]),
            testbench_markers: strings(&["tb", "TB"]),
        }
    }
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid filter config: {0}")]
    Config(String),
}

impl FilterConfig {
    /// Parses a TOML document; absent keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, FilterError> {
        toml::from_str(text).map_err(|e| FilterError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, FilterError> {
        let text = fs::read_to_string(path).map_err(|source| FilterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterVerdict {
    Keep { flags: Vec<String> },
    Reject(String),
}

impl FilterVerdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, FilterVerdict::Keep { .. })
    }
}

fn is_letter(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphabetic())
}

/// Case-insensitive search for `keyword` in `segment` where the match is not
/// glued to surrounding letters. A lower-to-upper case change also counts as
/// a boundary, so `aluTB` contains `tb` but `heartbeat` does not.
pub fn contains_keyword(segment: &str, keyword: &str) -> bool {
    if keyword.is_empty() {
        return false;
    }
    let chars: Vec<char> = segment.chars().collect();
    let key: Vec<char> = keyword.chars().flat_map(char::to_lowercase).collect();
    if key.len() > chars.len() {
        return false;
    }
    for start in 0..=chars.len() - key.len() {
        let window = &chars[start..start + key.len()];
        if !window
            .iter()
            .flat_map(|c| c.to_lowercase())
            .eq(key.iter().copied())
        {
            continue;
        }
        let first = window[0];
        let last = window[key.len() - 1];
        let before = start.checked_sub(1).map(|i| chars[i]);
        let after = chars.get(start + key.len()).copied();
        let left_ok = !first.is_alphabetic()
            || !is_letter(before)
            || (before.is_some_and(char::is_lowercase) && first.is_uppercase());
        let right_ok = !last.is_alphabetic()
            || !is_letter(after)
            || (last.is_lowercase() && after.is_some_and(char::is_uppercase));
        if left_ok && right_ok {
            return true;
        }
    }
    false
}

fn is_ident_char(c: Option<char>) -> bool {
    c.is_some_and(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

/// Whole-identifier occurrence of `word` in `text`.
fn contains_word(text: &str, word: &str) -> bool {
    text.match_indices(word).any(|(i, _)| {
        !is_ident_char(text[..i].chars().next_back())
            && !is_ident_char(text[i + word.len()..].chars().next())
    })
}

/// Decides whether one file survives the initial filter. Rules apply in
/// order: suffix, path keyword, testbench marker, content marker.
pub fn filter_file(file: &SourceFile, config: &FilterConfig) -> FilterVerdict {
    let name = file.file_name().to_lowercase();
    if let Some(suffix) = config
        .suffix_excludes
        .iter()
        .find(|s| name.ends_with(&s.to_lowercase()))
    {
        return FilterVerdict::Reject(format!("suffix {suffix}"));
    }

    let segments: Vec<&str> = file.path.split('/').collect();
    for keyword in &config.path_excludes {
        if segments.iter().any(|seg| contains_keyword(seg, keyword)) {
            return FilterVerdict::Reject(format!("path keyword {keyword}"));
        }
    }
    for marker in &config.testbench_markers {
        if segments.iter().any(|seg| contains_keyword(seg, marker)) {
            return FilterVerdict::Reject(format!("testbench marker {marker}"));
        }
    }

    let text = file.text();
    let live = mask(&text, Mask::Comments);
    let mut flags = Vec::new();
    for marker in &config.content_excludes {
        if config.soft_content_markers.contains(marker) {
            if contains_word(&live, marker) {
                flags.push(format!("content {marker}"));
            }
        } else if live.contains(marker.as_str()) {
            return FilterVerdict::Reject(format!("content {marker}"));
        }
    }
    FilterVerdict::Keep { flags }
}

/// Walks `root`; each immediate child directory is one project. Only `.v`
/// files are considered. Unreadable entries and `.v` files outside any
/// project directory are recorded as rejections.
pub fn scan_projects(
    root: &Path,
    config: &FilterConfig,
) -> Result<(Vec<ProjectUnit>, StageReport), FilterError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FilterError::Io { path, source }
    };
    let children = sorted_children(root).map_err(io_err(root))?;
    let mut report = StageReport::new(Stage::Filter);

    for loose in children
        .iter()
        .filter(|p| p.is_file() && is_verilog_path(p))
    {
        let size = fs::metadata(loose).map(|m| m.len()).unwrap_or(0);
        report.input_count += 1;
        report.input_bytes += size;
        let rel = normalize_path(&loose.strip_prefix(root).unwrap_or(loose).to_string_lossy());
        report.reject(rel, "outside project directory");
    }

    let dirs: Vec<&PathBuf> = children.iter().filter(|p| p.is_dir()).collect();
    let scanned: Vec<(Option<ProjectUnit>, StageReport)> = dirs
        .par_iter()
        .map(|dir| scan_one_project(root, dir, config))
        .collect();

    let mut projects = Vec::new();
    for (project, partial) in scanned {
        report.input_count += partial.input_count;
        report.output_count += partial.output_count;
        report.input_bytes += partial.input_bytes;
        report.output_bytes += partial.output_bytes;
        report.rejections.extend(partial.rejections);
        report.notes.extend(partial.notes);
        projects.extend(project);
    }
    report.canonicalize();
    Ok((projects, report))
}

fn scan_one_project(
    root: &Path,
    dir: &Path,
    config: &FilterConfig,
) -> (Option<ProjectUnit>, StageReport) {
    let mut report = StageReport::new(Stage::Filter);
    let project_id = ProjectId(
        dir.file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned(),
    );
    let origin = fs::read_to_string(dir.join(ORIGIN_FILE))
        .map(|s| Origin::parse(s.trim()))
        .unwrap_or_default();

    let mut files = Vec::new();
    let mut has_license = false;
    let mut has_readme = false;
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                let path = err.path().unwrap_or(dir);
                let rel =
                    normalize_path(&path.strip_prefix(root).unwrap_or(path).to_string_lossy());
                report.reject(rel, format!("io error: {err}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let lower = entry.file_name().to_string_lossy().to_lowercase();
        has_license |= lower.starts_with("license") || lower.starts_with("copying");
        has_readme |= lower.starts_with("readme");
        if !is_verilog_path(entry.path()) {
            continue;
        }
        let rel = normalize_path(
            &entry
                .path()
                .strip_prefix(root)
                .unwrap_or(entry.path())
                .to_string_lossy(),
        );
        report.input_count += 1;
        let content = match fs::read(entry.path()) {
            Ok(c) => c,
            Err(err) => {
                report.reject(rel, format!("io error: {err}"));
                continue;
            }
        };
        let file = SourceFile::new(rel, content).with_origin(origin.clone());
        report.input_bytes += file.len();
        match filter_file(&file, config) {
            FilterVerdict::Keep { flags } => {
                for flag in flags {
                    report.note(file.path.clone(), flag);
                }
                report.output_count += 1;
                report.output_bytes += file.len();
                files.push(file);
            }
            FilterVerdict::Reject(reason) => report.reject(file.path.clone(), reason),
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let notes = format!(
        "license={} readme={}",
        if has_license { "yes" } else { "no" },
        if has_readme { "yes" } else { "no" }
    );
    let project = (!files.is_empty()).then(|| ProjectUnit {
        project_id,
        root: dir.to_path_buf(),
        files,
        notes: Some(notes),
    });
    (project, report)
}

//! Per-file syntax gate backed by an external Verilog compiler.
//!
//! The compiler's diagnostics are triaged into syntax errors, which reject a
//! file, and elaboration issues (unresolved modules, includes, macro
//! warnings), which are deferred to the synthesis gate.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SourceFile, Stage, StageReport};
use crate::tools::{resolve_tool, run_tool, ToolError, Transcript};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const FILE_PLACEHOLDER: &str = "{file}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SyntaxVerdict {
    Pass,
    PassWithWarnings,
    PassWithElaborationIssues,
    SyntaxError,
    ToolFailure,
}

impl SyntaxVerdict {
    pub fn is_pass(self) -> bool {
        matches!(
            self,
            SyntaxVerdict::Pass
                | SyntaxVerdict::PassWithWarnings
                | SyntaxVerdict::PassWithElaborationIssues
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxOutcome {
    pub verdict: SyntaxVerdict,
    pub messages: Vec<String>,
}

/// Regexes used to triage compiler stderr lines.
#[derive(Debug, Clone)]
pub struct DiagnosticPatterns {
    pub syntax: Regex,
    pub elaboration: Regex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    pub syntax: String,
    pub elaboration: String,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            syntax: r"(?i)syntax error|malformed statement|invalid module item|error: .*(?:expected|unexpected)".into(),
            elaboration: r"(?i)unable to bind|not found|unknown module type|cannot find|include file|could not find|elaborat"
                .into(),
        }
    }
}

impl DiagnosticPatterns {
    pub fn from_config(cfg: &PatternConfig) -> Result<Self, regex::Error> {
        Ok(DiagnosticPatterns {
            syntax: Regex::new(&cfg.syntax)?,
            elaboration: Regex::new(&cfg.elaboration)?,
        })
    }
}

impl Default for DiagnosticPatterns {
    fn default() -> Self {
        Self::from_config(&PatternConfig::default()).expect("default patterns compile")
    }
}

/// Classifies one compiler run. Pure in `(exit code, stderr)`.
///
/// A zero exit passes (with warnings when stderr is non-empty). Otherwise
/// each stderr line is tested against the syntax pattern first and the
/// elaboration pattern (or a `warning: macro` line) second. Any elaboration
/// line makes the file pass with deferred issues; syntax matches alone reject
/// it; anything else is an unclassified failure.
pub fn classify(transcript: &Transcript, patterns: &DiagnosticPatterns) -> SyntaxOutcome {
    let stderr = transcript.stderr.trim();
    let lines: Vec<String> = stderr.lines().map(str::to_string).collect();
    if transcript.exit_code == 0 {
        let verdict = if stderr.is_empty() {
            SyntaxVerdict::Pass
        } else {
            SyntaxVerdict::PassWithWarnings
        };
        return SyntaxOutcome {
            verdict,
            messages: lines,
        };
    }

    let mut has_syntax_error = false;
    let mut elaboration = Vec::new();
    for line in &lines {
        if patterns.syntax.is_match(line) {
            has_syntax_error = true;
        } else if patterns.elaboration.is_match(line) || line.contains("warning: macro") {
            elaboration.push(line.clone());
        }
    }

    if has_syntax_error && elaboration.is_empty() {
        SyntaxOutcome {
            verdict: SyntaxVerdict::SyntaxError,
            messages: lines,
        }
    } else if !elaboration.is_empty() {
        SyntaxOutcome {
            verdict: SyntaxVerdict::PassWithElaborationIssues,
            messages: elaboration,
        }
    } else {
        let messages = if lines.is_empty() {
            vec!["Check failed: Unknown error".to_string()]
        } else {
            lines.iter().map(|l| format!("Check failed: {l}")).collect()
        };
        SyntaxOutcome {
            verdict: SyntaxVerdict::SyntaxError,
            messages,
        }
    }
}

/// One scripted response of the stub compiler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubEntry {
    /// Exact relative path to match.
    #[serde(default)]
    pub path: Option<String>,
    /// Matches files whose text contains this substring.
    #[serde(default)]
    pub content_contains: Option<String>,
    #[serde(default)]
    pub exit_code: i32,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
}

impl StubEntry {
    fn matches(&self, file: &SourceFile) -> bool {
        self.path.as_deref().is_none_or(|p| p == file.path)
            && self
                .content_contains
                .as_deref()
                .is_none_or(|needle| file.text().contains(needle))
            && (self.path.is_some() || self.content_contains.is_some())
    }

    fn transcript(&self) -> Transcript {
        Transcript::new(self.exit_code, self.stdout.clone(), self.stderr.clone())
    }
}

/// Scripted compiler: first matching entry wins; unmatched files get a clean
/// pass unless `default` says otherwise.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubCompiler {
    #[serde(default)]
    pub default: Option<StubEntry>,
    #[serde(default, rename = "file")]
    pub entries: Vec<StubEntry>,
}

impl StubCompiler {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn respond(&self, file: &SourceFile) -> Transcript {
        self.entries
            .iter()
            .find(|e| e.matches(file))
            .or(self.default.as_ref())
            .map(StubEntry::transcript)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub enum CompilerBackend {
    External {
        tool: PathBuf,
        /// Argument template; [`FILE_PLACEHOLDER`] is replaced by the file path.
        args: Vec<String>,
        timeout: Duration,
        /// Directory holding the files; when absent the content is written
        /// to a scratch file first.
        source_root: Option<PathBuf>,
    },
    Stub(StubCompiler),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("unknown backend `{0}`")]
    UnknownBackend(String),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("invalid stub script: {0}")]
    Stub(String),
}

impl CompilerBackend {
    /// Icarus Verilog invocation that compiles one file and discards the
    /// output image.
    pub fn icarus(tool: impl Into<PathBuf>) -> Self {
        let null = if cfg!(windows) { "nul" } else { "/dev/null" };
        CompilerBackend::External {
            tool: tool.into(),
            args: vec![
                "-o".into(),
                null.into(),
                "-Wall".into(),
                FILE_PLACEHOLDER.into(),
            ],
            timeout: DEFAULT_TIMEOUT,
            source_root: None,
        }
    }

    pub fn with_source_root(mut self, root: &Path) -> Self {
        if let CompilerBackend::External { source_root, .. } = &mut self {
            *source_root = Some(root.to_path_buf());
        }
        self
    }

    pub fn with_timeout(mut self, limit: Duration) -> Self {
        if let CompilerBackend::External { timeout, .. } = &mut self {
            *timeout = limit;
        }
        self
    }

    /// Fails when an external tool cannot be resolved.
    pub fn ensure_available(&self) -> Result<(), BackendError> {
        match self {
            CompilerBackend::External { tool, .. } if resolve_tool(tool).is_none() => {
                Err(ToolError::NotFound(tool.display().to_string()).into())
            }
            _ => Ok(()),
        }
    }

    fn run(&self, file: &SourceFile) -> Result<Transcript, String> {
        match self {
            CompilerBackend::Stub(stub) => Ok(stub.respond(file)),
            CompilerBackend::External {
                tool,
                args,
                timeout,
                source_root,
            } => {
                let scratch;
                let disk_path = match source_root {
                    Some(root) if root.join(&file.path).is_file() => root.join(&file.path),
                    _ => {
                        scratch = tempfile::Builder::new()
                            .suffix(".v")
                            .tempfile()
                            .map_err(|e| format!("scratch file: {e}"))?;
                        fs::write(scratch.path(), &file.content)
                            .map_err(|e| format!("scratch file: {e}"))?;
                        scratch.path().to_path_buf()
                    }
                };
                let file_arg = disk_path.to_string_lossy();
                let argv: Vec<String> = args
                    .iter()
                    .map(|a| a.replace(FILE_PLACEHOLDER, &file_arg))
                    .collect();
                run_tool(tool, &argv, *timeout).map_err(|e| e.to_string())
            }
        }
    }
}

pub fn check_syntax(
    file: &SourceFile,
    backend: &CompilerBackend,
    patterns: &DiagnosticPatterns,
) -> SyntaxOutcome {
    match backend.run(file) {
        Ok(transcript) => classify(&transcript, patterns),
        Err(detail) => SyntaxOutcome {
            verdict: SyntaxVerdict::ToolFailure,
            messages: vec![detail],
        },
    }
}

/// One line of the syntax failure log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxLogEntry {
    pub path: String,
    pub verdict: SyntaxVerdict,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SyntaxStageOutput {
    pub passed: Vec<SourceFile>,
    pub report: StageReport,
    /// Every non-clean outcome, in path order.
    pub log: Vec<SyntaxLogEntry>,
}

/// Checks every file independently and keeps the passing ones.
pub fn run_syntax_stage(
    files: Vec<SourceFile>,
    backend: &CompilerBackend,
    patterns: &DiagnosticPatterns,
) -> SyntaxStageOutput {
    let mut report = StageReport::new(Stage::Syntax);
    report.input_count = files.len() as u64;
    report.input_bytes = files.iter().map(SourceFile::len).sum();

    let outcomes: Vec<SyntaxOutcome> = files
        .par_iter()
        .map(|f| check_syntax(f, backend, patterns))
        .collect();

    let mut passed = Vec::new();
    let mut log = Vec::new();
    for (file, outcome) in files.into_iter().zip(outcomes) {
        if outcome.verdict != SyntaxVerdict::Pass {
            log.push(SyntaxLogEntry {
                path: file.path.clone(),
                verdict: outcome.verdict,
                messages: outcome.messages.clone(),
            });
        }
        if outcome.verdict.is_pass() {
            if outcome.verdict == SyntaxVerdict::PassWithElaborationIssues {
                report.note(
                    file.path.clone(),
                    "elaboration issues deferred to synthesis",
                );
            }
            passed.push(file);
        } else {
            let first = outcome.messages.first().cloned().unwrap_or_default();
            let reason = match outcome.verdict {
                SyntaxVerdict::ToolFailure => format!("tool failure: {first}"),
                _ => format!("syntax error: {first}"),
            };
            report.reject(file.path.clone(), reason);
        }
    }
    passed.sort_by(|a, b| a.path.cmp(&b.path));
    log.sort_by(|a, b| a.path.cmp(&b.path));
    report.output_count = passed.len() as u64;
    report.output_bytes = passed.iter().map(SourceFile::len).sum();
    report.canonicalize();
    SyntaxStageOutput {
        passed,
        report,
        log,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdict(code: i32, stderr: &str) -> SyntaxVerdict {
        classify(
            &Transcript::new(code, "", stderr),
            &DiagnosticPatterns::default(),
        )
        .verdict
    }

    #[test]
    fn clean_and_warning_runs_pass() {
        assert_eq!(verdict(0, ""), SyntaxVerdict::Pass);
        assert_eq!(verdict(0, "  \n"), SyntaxVerdict::Pass);
        assert_eq!(
            verdict(0, "a.v:3: warning: implicit wire"),
            SyntaxVerdict::PassWithWarnings
        );
    }

    #[test]
    fn syntax_lines_reject() {
        let out = classify(
            &Transcript::new(1, "", "bad.v:1: syntax error\nI give up.\n"),
            &DiagnosticPatterns::default(),
        );
        assert_eq!(out.verdict, SyntaxVerdict::SyntaxError);
        assert_eq!(out.messages, ["bad.v:1: syntax error", "I give up."]);
    }

    #[test]
    fn elaboration_lines_defer() {
        let out = classify(
            &Transcript::new(
                2,
                "",
                "top.v:4: error: Unknown module type: missing\n1 error(s) during elaboration.\n",
            ),
            &DiagnosticPatterns::default(),
        );
        assert_eq!(out.verdict, SyntaxVerdict::PassWithElaborationIssues);
        assert_eq!(out.messages.len(), 2);
        assert_eq!(
            verdict(1, "x.v:1: warning: macro FOO undefined"),
            SyntaxVerdict::PassWithElaborationIssues
        );
    }

    #[test]
    fn unclassified_failure_is_a_check_failure() {
        let out = classify(&Transcript::new(1, "", ""), &DiagnosticPatterns::default());
        assert_eq!(out.verdict, SyntaxVerdict::SyntaxError);
        assert_eq!(out.messages, ["Check failed: Unknown error"]);
    }

    #[test]
    fn stub_matches_path_then_content() {
        let stub = StubCompiler::from_toml(
            r#"
            [[file]]
            path = "p/bad.v"
            exit_code = 1
            stderr = "p/bad.v:2: syntax error"

            [[file]]
            content_contains = "logic"
            exit_code = 1
            stderr = "x: syntax error"
            "#,
        )
        .unwrap();
        let backend = CompilerBackend::Stub(stub);
        let pats = DiagnosticPatterns::default();
        let bad = SourceFile::new("p/bad.v", "module b; endmodule");
        let sv = SourceFile::new("p/sv.v", "module s(input logic a); endmodule");
        let ok = SourceFile::new("p/ok.v", "module o; endmodule");
        assert_eq!(
            check_syntax(&bad, &backend, &pats).verdict,
            SyntaxVerdict::SyntaxError
        );
        assert_eq!(
            check_syntax(&sv, &backend, &pats).verdict,
            SyntaxVerdict::SyntaxError
        );
        assert_eq!(
            check_syntax(&ok, &backend, &pats).verdict,
            SyntaxVerdict::Pass
        );
    }

    #[test]
    fn counting_contract() {
        let mut stub = StubCompiler::default();
        for i in 0..4 {
            stub.entries.push(StubEntry {
                path: Some(format!("p/f{i}.v")),
                content_contains: None,
                exit_code: 1,
                stdout: String::new(),
                stderr: "syntax error".into(),
            });
        }
        let files: Vec<_> = (0..10)
            .map(|i| SourceFile::new(format!("p/f{i}.v"), format!("m{i}")))
            .collect();
        let out = run_syntax_stage(
            files,
            &CompilerBackend::Stub(stub),
            &DiagnosticPatterns::default(),
        );
        assert_eq!(out.passed.len(), 6);
        assert_eq!(out.report.rejections.len(), 4);
        assert_eq!(out.log.len(), 4);
    }

    #[test]
    fn missing_external_tool_is_tool_failure() {
        let backend = CompilerBackend::icarus("no-such-iverilog-binary");
        assert!(backend.ensure_available().is_err());
        let out = check_syntax(
            &SourceFile::new("p/a.v", "x"),
            &backend,
            &DiagnosticPatterns::default(),
        );
        assert_eq!(out.verdict, SyntaxVerdict::ToolFailure);
    }

    #[test]
    fn external_backend_runs_template() {
        // `sh -c` stands in for a compiler: fails on files containing "bad".
        let backend = CompilerBackend::External {
            tool: "sh".into(),
            args: vec![
                "-c".into(),
                "grep -q bad \"$0\" && echo \"$0:1: syntax error\" >&2 && exit 1; exit 0".into(),
                FILE_PLACEHOLDER.into(),
            ],
            timeout: Duration::from_secs(10),
            source_root: None,
        };
        let pats = DiagnosticPatterns::default();
        let good = check_syntax(&SourceFile::new("p/g.v", "good"), &backend, &pats);
        let bad = check_syntax(&SourceFile::new("p/b.v", "bad"), &backend, &pats);
        assert_eq!(good.verdict, SyntaxVerdict::Pass);
        assert_eq!(bad.verdict, SyntaxVerdict::SyntaxError);
    }
}

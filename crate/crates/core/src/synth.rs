//! Project-level synthesizability gate.
//!
//! For each project the declared modules are indexed, every combination of
//! same-named module declarations becomes a scenario, and each scenario is
//! synthesized against an ordered list of top-module candidates until one
//! passes. A project passes on its first passing scenario; the files of that
//! scenario are retained.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dedup::compute_content_hash;
use crate::extract::find_modules;
use crate::model::{ProjectUnit, SourceFile, Stage, StageReport};
use crate::scan::{mask, Mask};
use crate::tools::{resolve_tool, run_tool, ToolError, Transcript};

pub const DEFAULT_MAX_SCENARIOS: usize = 64;
pub const DEFAULT_PROBE_BUDGET: usize = 8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("ParseFailure: no module declaration in {0}")]
    ParseFailure(String),
    #[error("scenario has no files")]
    EmptyScenario,
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("invalid synthesis config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopBasis {
    NameHeuristic,
    IterativeProbe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopCandidate {
    pub module_name: String,
    pub file: String,
    pub basis: TopBasis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthScenario {
    /// One declaring file per module name, sorted.
    pub selected_files: Vec<String>,
    pub top: TopCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthResult {
    pub failure: bool,
    pub output: String,
    pub scenario: SynthScenario,
}

/// Modules declared by one file, each with the project modules it
/// instantiates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileModules {
    pub path: String,
    pub modules: Vec<(String, BTreeSet<String>)>,
}

/// Declarations and instantiations across a project.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleIndex {
    pub by_name: BTreeMap<String, Vec<String>>,
    pub files: BTreeMap<String, FileModules>,
    /// Files without any module declaration.
    pub unparsed: Vec<String>,
}

fn instance_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-Za-z_][A-Za-z0-9_$]*)\s*(?:#\s*\(|\\?[A-Za-z_])").unwrap())
}

pub fn index_project(project: &ProjectUnit) -> ModuleIndex {
    let mut declared: Vec<(String, Vec<(String, String)>)> = Vec::new();
    let mut unparsed = Vec::new();
    for file in &project.files {
        let text = file.text();
        match find_modules(&text) {
            Ok(spans) => {
                let masked = mask(&text, Mask::CommentsAndStrings);
                let mods = spans
                    .into_iter()
                    .map(|s| (s.name, masked[s.body].to_string()))
                    .collect();
                declared.push((file.path.clone(), mods));
            }
            Err(_) => unparsed.push(file.path.clone()),
        }
    }
    let mut by_name: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (path, mods) in &declared {
        for (name, _) in mods {
            let paths = by_name.entry(name.clone()).or_default();
            if !paths.contains(path) {
                paths.push(path.clone());
            }
        }
    }
    for paths in by_name.values_mut() {
        paths.sort();
    }
    let files = declared
        .into_iter()
        .map(|(path, mods)| {
            let modules = mods
                .into_iter()
                .map(|(name, body)| {
                    let used = instance_re()
                        .captures_iter(&body)
                        .map(|c| c[1].to_string())
                        .filter(|n| n != &name && by_name.contains_key(n))
                        .collect();
                    (name, used)
                })
                .collect();
            (path.clone(), FileModules { path, modules })
        })
        .collect();
    ModuleIndex {
        by_name,
        files,
        unparsed,
    }
}

/// Module name → declaring files. Fails on a file with no module.
pub fn collect_unique_modules(
    project: &ProjectUnit,
) -> Result<BTreeMap<String, Vec<String>>, SynthError> {
    let index = index_project(project);
    match index.unparsed.first() {
        Some(path) => Err(SynthError::ParseFailure(path.clone())),
        None => Ok(index.by_name),
    }
}

/// Expands same-name declarations into file selections, in odometer order
/// (last collision name varies fastest). Selections where two chosen files
/// declare a common module are skipped. Returns at most `cap` selections and
/// the size of the full expansion.
pub fn enumerate_scenarios(index: &ModuleIndex, cap: usize) -> (Vec<Vec<String>>, usize) {
    let collisions: Vec<(&String, &Vec<String>)> =
        index.by_name.iter().filter(|(_, f)| f.len() > 1).collect();
    let contested: BTreeSet<&String> = collisions.iter().flat_map(|(_, f)| f.iter()).collect();
    let fixed: Vec<&String> = index
        .files
        .keys()
        .filter(|p| !contested.contains(p))
        .collect();
    let total = collisions
        .iter()
        .try_fold(1usize, |acc, (_, f)| acc.checked_mul(f.len()))
        .unwrap_or(usize::MAX);

    let mut selections: Vec<Vec<String>> = Vec::new();
    let mut digits = vec![0usize; collisions.len()];
    loop {
        let mut chosen: BTreeSet<&String> = fixed.iter().copied().collect();
        for (d, (_, files)) in digits.iter().zip(&collisions) {
            chosen.insert(&files[*d]);
        }
        let mut seen_names = BTreeSet::new();
        let valid = chosen
            .iter()
            .flat_map(|p| index.files[*p].modules.iter().map(|(n, _)| n))
            .all(|n| seen_names.insert(n));
        let selection: Vec<String> = chosen.into_iter().cloned().collect();
        if valid && !selections.contains(&selection) {
            selections.push(selection);
            if selections.len() >= cap {
                break;
            }
        }
        // Advance the odometer.
        let mut pos = digits.len();
        loop {
            if pos == 0 {
                return (selections, total);
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < collisions[pos].1.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
    (selections, total)
}

/// Orders top-module candidates for the modules declared by `files`:
/// modules or files named with `top` first, then modules no other module
/// instantiates, then the rest. Ties sort by module name.
pub fn determine_top_module(index: &ModuleIndex, files: &[String]) -> Vec<TopCandidate> {
    let mut modules: Vec<(&String, &String, &BTreeSet<String>)> = Vec::new();
    for path in files {
        if let Some(fm) = index.files.get(path) {
            for (name, used) in &fm.modules {
                modules.push((name, path, used));
            }
        }
    }
    let instantiated: BTreeSet<&String> = modules
        .iter()
        .flat_map(|(_, _, used)| used.iter())
        .collect();
    let file_stem = |p: &str| p.rsplit('/').next().unwrap_or(p).to_lowercase();

    let mut ranked: Vec<(u8, bool, &String, &String)> = modules
        .iter()
        .map(|&(name, path, _)| {
            let named_top = name.to_lowercase().contains("top") || file_stem(path).contains("top");
            let is_root = !instantiated.contains(name);
            let tier = if named_top {
                0
            } else if is_root {
                1
            } else {
                2
            };
            (tier, !is_root, name, path)
        })
        .collect();
    ranked.sort();
    ranked
        .into_iter()
        .map(|(tier, _, name, path)| TopCandidate {
            module_name: name.clone(),
            file: path.clone(),
            basis: if tier == 0 {
                TopBasis::NameHeuristic
            } else {
                TopBasis::IterativeProbe
            },
        })
        .collect()
}

/// Synthesis script: read every selected file, check the hierarchy under
/// the scenario top, then map to a generic gate netlist. File paths are
/// joined onto `root` when given.
pub fn build_synthesis_script(
    scenario: &SynthScenario,
    root: Option<&Path>,
) -> Result<String, SynthError> {
    if scenario.selected_files.is_empty() {
        return Err(SynthError::EmptyScenario);
    }
    let mut lines: Vec<String> = scenario
        .selected_files
        .iter()
        .map(|f| {
            let path = root.map_or_else(|| f.clone(), |r| r.join(f).to_string_lossy().into_owned());
            format!("read_verilog \"{}\"", path.replace('"', "\\\""))
        })
        .collect();
    let top = &scenario.top.module_name;
    lines.push(format!("hierarchy -check -top {top}"));
    lines.push(format!("synth -top {top}"));
    Ok(lines.join("\n"))
}

#[derive(Debug, Clone)]
pub struct FailurePattern(pub Regex);

impl Default for FailurePattern {
    fn default() -> Self {
        FailurePattern(
            Regex::new(r"(?m)^ERROR:.*$|(?i)is not part of the design|unresolved (?:module|reference)|can't find module")
                .unwrap(),
        )
    }
}

impl FailurePattern {
    pub fn new(pattern: &str) -> Result<Self, SynthError> {
        Regex::new(pattern)
            .map(FailurePattern)
            .map_err(|e| SynthError::Config(e.to_string()))
    }

    /// Non-tolerable matches in a combined transcript.
    pub fn errors<'a>(&self, output: &'a str) -> Vec<&'a str> {
        self.0.find_iter(output).map(|m| m.as_str()).collect()
    }
}

/// `strip(stdout) + "\n" + strip(stderr)`.
pub fn combined_output(t: &Transcript) -> String {
    format!("{}\n{}", t.stdout.trim(), t.stderr.trim())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRule {
    #[serde(default)]
    pub project: Option<String>,
    /// Matches scenarios that include this file.
    #[serde(default)]
    pub when_file: Option<String>,
    #[serde(default)]
    pub top: Option<String>,
    #[serde(default)]
    pub exit_code: i32,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
}

/// Scripted synthesizer: the first rule matching (project, scenario files,
/// top) supplies the transcript; otherwise a clean run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubSynth {
    #[serde(default, rename = "rule")]
    pub rules: Vec<StubRule>,
}

impl StubSynth {
    pub fn from_toml(text: &str) -> Result<Self, SynthError> {
        toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))
    }

    pub fn respond(&self, project: &str, scenario: &SynthScenario) -> Transcript {
        self.rules
            .iter()
            .find(|r| {
                r.project.as_deref().is_none_or(|p| p == project)
                    && r.when_file
                        .as_deref()
                        .is_none_or(|f| scenario.selected_files.iter().any(|s| s == f))
                    && r.top
                        .as_deref()
                        .is_none_or(|t| t == scenario.top.module_name)
            })
            .map(|r| Transcript::new(r.exit_code, r.stdout.clone(), r.stderr.clone()))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub enum SynthBackend {
    /// Yosys-compatible command line: `tool -q -p <script>`.
    External {
        tool: PathBuf,
        timeout: Duration,
        source_root: PathBuf,
    },
    Stub(StubSynth),
}

impl SynthBackend {
    pub fn yosys(tool: impl Into<PathBuf>, source_root: impl Into<PathBuf>) -> Self {
        SynthBackend::External {
            tool: tool.into(),
            timeout: Duration::from_secs(300),
            source_root: source_root.into(),
        }
    }

    pub fn ensure_available(&self) -> Result<(), SynthError> {
        match self {
            SynthBackend::External { tool, .. } if resolve_tool(tool).is_none() => {
                Err(ToolError::NotFound(tool.display().to_string()).into())
            }
            _ => Ok(()),
        }
    }

    fn run(&self, project: &str, scenario: &SynthScenario) -> Result<Transcript, SynthError> {
        match self {
            SynthBackend::Stub(stub) => Ok(stub.respond(project, scenario)),
            SynthBackend::External {
                tool,
                timeout,
                source_root,
            } => {
                let script =
                    build_synthesis_script(scenario, Some(source_root))?.replace('\n', "; ");
                Ok(run_tool(
                    tool,
                    &["-q".into(), "-p".into(), script],
                    *timeout,
                )?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SynthLimits {
    pub max_scenarios: usize,
    pub probe_budget: usize,
}

impl Default for SynthLimits {
    fn default() -> Self {
        SynthLimits {
            max_scenarios: DEFAULT_MAX_SCENARIOS,
            probe_budget: DEFAULT_PROBE_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub scenario: usize,
    pub top: String,
    pub failure: bool,
    pub transcript_md5: String,
}

/// Per-project synthesis log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSynthLog {
    pub project: String,
    pub scenarios_total: usize,
    pub scenarios_tried: usize,
    pub attempts: Vec<AttemptLog>,
    pub passed: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ProjectSynthOutcome {
    pub results: Vec<SynthResult>,
    pub passed: bool,
    /// Files of the passing scenario.
    pub retained: Vec<String>,
    pub failure_reason: Option<String>,
    pub log: ProjectSynthLog,
    /// Files that declare no module.
    pub unparsed: Vec<String>,
}

/// Runs the synthesis probes for one project, stopping at the first pass.
pub fn run_synth_check(
    project: &ProjectUnit,
    backend: &SynthBackend,
    pattern: &FailurePattern,
    limits: SynthLimits,
) -> Result<ProjectSynthOutcome, SynthError> {
    let index = index_project(project);
    let pid = project.project_id.0.clone();
    let (selections, total) = enumerate_scenarios(&index, limits.max_scenarios.max(1));
    let mut results = Vec::new();
    let mut attempts = Vec::new();
    let mut last_error: Option<String> = None;
    let mut budget_exhausted = false;

    for (n, files) in selections.iter().enumerate() {
        let candidates = determine_top_module(&index, files);
        if candidates.len() > limits.probe_budget {
            budget_exhausted = true;
        }
        for top in candidates.into_iter().take(limits.probe_budget) {
            let scenario = SynthScenario {
                selected_files: files.clone(),
                top,
            };
            let transcript = backend.run(&pid, &scenario)?;
            let output = combined_output(&transcript);
            let errors = pattern.errors(&output);
            let failure = !errors.is_empty();
            if let Some(first) = errors.first() {
                last_error = Some(first.trim().to_string());
            }
            attempts.push(AttemptLog {
                scenario: n + 1,
                top: scenario.top.module_name.clone(),
                failure,
                transcript_md5: compute_content_hash(output.as_bytes()),
            });
            results.push(SynthResult {
                failure,
                output,
                scenario: scenario.clone(),
            });
            if !failure {
                let log = ProjectSynthLog {
                    project: pid,
                    scenarios_total: total,
                    scenarios_tried: n + 1,
                    attempts,
                    passed: true,
                    reason: None,
                };
                return Ok(ProjectSynthOutcome {
                    results,
                    passed: true,
                    retained: scenario.selected_files,
                    failure_reason: None,
                    log,
                    unparsed: index.unparsed,
                });
            }
        }
    }

    let reason = if selections.is_empty() {
        "no module declarations".to_string()
    } else if total > limits.max_scenarios {
        format!(
            "ScenarioExplosion: {total} scenarios exceed cap {}",
            limits.max_scenarios
        )
    } else if budget_exhausted {
        format!(
            "no synthesizable top found within {} probes: {}",
            limits.probe_budget,
            last_error.unwrap_or_default()
        )
    } else {
        format!("synthesis failed: {}", last_error.unwrap_or_default())
    };
    let log = ProjectSynthLog {
        project: pid,
        scenarios_total: total,
        scenarios_tried: selections.len(),
        attempts,
        passed: false,
        reason: Some(reason.clone()),
    };
    Ok(ProjectSynthOutcome {
        results,
        passed: false,
        retained: Vec::new(),
        failure_reason: Some(reason),
        log,
        unparsed: index.unparsed,
    })
}

#[derive(Debug, Clone)]
pub struct SynthStageOutput {
    pub passed: Vec<SourceFile>,
    pub report: StageReport,
    pub logs: Vec<ProjectSynthLog>,
}

/// Checks every project in parallel and keeps the files of passing
/// scenarios.
pub fn run_synth_stage(
    projects: &[ProjectUnit],
    backend: &SynthBackend,
    pattern: &FailurePattern,
    limits: SynthLimits,
) -> SynthStageOutput {
    let mut report = StageReport::new(Stage::Synthesis);
    report.input_count = projects.iter().map(|p| p.files.len() as u64).sum();
    report.input_bytes = projects.iter().map(ProjectUnit::total_bytes).sum();

    let outcomes: Vec<_> = projects
        .par_iter()
        .map(|p| (p, run_synth_check(p, backend, pattern, limits)))
        .collect();

    let mut passed = Vec::new();
    let mut logs = Vec::new();
    for (project, outcome) in outcomes {
        match outcome {
            Ok(outcome) => {
                for file in &project.files {
                    if outcome.retained.contains(&file.path) {
                        passed.push(file.clone());
                    } else if outcome.unparsed.contains(&file.path) {
                        report.reject(file.path.clone(), "ParseFailure: no module declaration");
                    } else if outcome.passed {
                        report.reject(file.path.clone(), "not in passing scenario");
                    } else {
                        report.reject(
                            file.path.clone(),
                            outcome.failure_reason.clone().unwrap_or_default(),
                        );
                    }
                }
                logs.push(outcome.log);
            }
            Err(err) => {
                for file in &project.files {
                    report.reject(file.path.clone(), err.to_string());
                }
                logs.push(ProjectSynthLog {
                    project: project.project_id.0.clone(),
                    scenarios_total: 0,
                    scenarios_tried: 0,
                    attempts: Vec::new(),
                    passed: false,
                    reason: Some(err.to_string()),
                });
            }
        }
    }
    passed.sort_by(|a, b| a.path.cmp(&b.path));
    logs.sort_by(|a, b| a.project.cmp(&b.project));
    report.output_count = passed.len() as u64;
    report.output_bytes = passed.iter().map(SourceFile::len).sum();
    report.canonicalize();
    SynthStageOutput {
        passed,
        report,
        logs,
    }
}

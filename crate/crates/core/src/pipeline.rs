//! Stage orchestration over a staging directory.
//!
//! Layout below the work directory:
//!
//! ```text
//! 01_filtered/   01_filtered.report.json   01_filtered.events.jsonl
//! 02_unique/     02_unique.report.json     02_unique.groups.json
//! 03_syntax_ok/  03_syntax_ok.report.json  03_syntax_ok.log.jsonl
//! 04_synth_ok/   04_synth_ok.report.json   04_synth_ok.log.jsonl
//! 05_records/    05_records.report.json
//! export/records.jsonl  export/pairs.jsonl
//! forge.db (default store)   report/ (consolidated report)
//! ```
//!
//! Each stage reads the previous stage's directory, so a stage can be rerun
//! alone once its input exists.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::{self, render_report, Classifier, CorpusStats, ReportFiles, Taxonomy};
use crate::config::{BackendKind, ConfigError, ModelUse, PipelineConfig, StageToggles};
use crate::dedup::{copy_survivors, deduplicate};
use crate::extract::{extract_project, DescriptionClient, ExtractOptions};
use crate::filter::scan_projects;
use crate::fsutil::{copy_preserving, load_files, load_tree, reset_dir, write_json, write_jsonl};
use crate::instruct::{export_pairs, ExportCounts};
use crate::llm::ChatClient;
use crate::model::{serialize_record, RecordFileNamer, SourceFile, Stage, StageReport};
use crate::store::{export_jsonl, open_store, run_db_stage, ModuleStore, QueryFilter};
use crate::syntax::{run_syntax_stage, CompilerBackend, DiagnosticPatterns};
use crate::synth::run_synth_stage;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("StageFailure({stage}): {detail}")]
    StageFailure { stage: Stage, detail: String },
}

fn failure(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |detail| PipelineError::StageFailure { stage, detail }
}

/// Staging directory name of a stage's output.
pub fn stage_dir_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Filter => "01_filtered",
        Stage::Dedup => "02_unique",
        Stage::Syntax => "03_syntax_ok",
        Stage::Synthesis => "04_synth_ok",
        Stage::DbValidation => "05_records",
    }
}

fn previous(stage: Stage) -> Option<Stage> {
    let i = Stage::ALL.iter().position(|&s| s == stage)?;
    i.checked_sub(1).map(|j| Stage::ALL[j])
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub only: Option<Stage>,
    /// Input directory for the first stage that runs.
    pub input_override: Option<PathBuf>,
    pub dry_run: bool,
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StagePlan {
    pub stage: Stage,
    pub input: PathBuf,
    pub output: PathBuf,
}

/// Stages to run with their directories. Each stage's input must come from
/// an earlier stage in this run, from the override, or already exist from a
/// previous run.
pub fn plan(config: &PipelineConfig, opts: &RunOptions) -> Result<Vec<StagePlan>, PipelineError> {
    let toggles = opts.only.map_or(config.stages, StageToggles::only);
    let mut plans: Vec<StagePlan> = Vec::new();
    for stage in Stage::ALL {
        if !toggles.enabled(stage) {
            continue;
        }
        let input = match (plans.is_empty(), &opts.input_override, previous(stage)) {
            (true, Some(dir), _) => dir.clone(),
            (_, _, None) => config.input.clone(),
            (_, _, Some(prev)) => config.work.join(stage_dir_name(prev)),
        };
        let produced_here = previous(stage).is_some_and(|p| plans.iter().any(|pl| pl.stage == p));
        if !produced_here && !input.is_dir() {
            return Err(ConfigError::Invalid(format!(
                "{stage} input {} is neither produced by an enabled stage nor present",
                input.display()
            ))
            .into());
        }
        plans.push(StagePlan {
            stage,
            input,
            output: config.work.join(stage_dir_name(stage)),
        });
    }
    if plans.is_empty() {
        return Err(ConfigError::Invalid("no stage enabled".into()).into());
    }
    Ok(plans)
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub plan: Vec<StagePlan>,
    pub reports: Vec<StageReport>,
    /// Modules in the store after validation.
    pub modules: Option<u64>,
    pub pairs: Option<ExportCounts>,
    pub stats: Option<CorpusStats<f64>>,
    pub report_files: Option<ReportFiles>,
}

#[derive(Serialize)]
struct Event<'a> {
    stage: &'a str,
    path: &'a str,
    event: &'a str,
    detail: &'a str,
}

fn write_stage_files(work: &Path, report: &StageReport) -> Result<(), String> {
    let name = stage_dir_name(report.stage);
    write_json(&work.join(format!("{name}.report.json")), report).map_err(|e| e.to_string())?;
    let label = report.stage.label();
    let events: Vec<Event> = report
        .rejections
        .iter()
        .map(|r| (r, "rejected"))
        .chain(report.notes.iter().map(|n| (n, "note")))
        .map(|(r, event)| Event {
            stage: label,
            path: &r.path,
            event,
            detail: &r.reason,
        })
        .collect();
    write_jsonl(&work.join(format!("{name}.events.jsonl")), &events).map_err(|e| e.to_string())
}

fn copy_files(files: &[SourceFile], from: &Path, to: &Path) -> Result<(), String> {
    reset_dir(to).map_err(|e| format!("{}: {e}", to.display()))?;
    for f in files {
        copy_preserving(&from.join(&f.path), &to.join(&f.path))
            .map_err(|e| format!("{}: {e}", f.path))?;
    }
    Ok(())
}

fn summarize(report: &StageReport, started: Instant) {
    log::info!(
        "{}: {} -> {} files, {}% of bytes retained, {} rejected ({:.2?})",
        report.stage.label(),
        report.input_count,
        report.output_count,
        analytics::report::format_retention(report.retention_percent()),
        report.rejections.len(),
        started.elapsed()
    );
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    reports: Vec<StageReport>,
    modules: Option<u64>,
    pairs: Option<ExportCounts>,
    stats: Option<CorpusStats<f64>>,
}

impl Runner<'_> {
    fn run_stage(&mut self, p: &StagePlan) -> Result<(), PipelineError> {
        let fail = failure(p.stage);
        let started = Instant::now();
        let report = match p.stage {
            Stage::Filter => {
                let (projects, report) = scan_projects(&p.input, &self.config.filter)
                    .map_err(|e| fail(e.to_string()))?;
                let files: Vec<SourceFile> = projects.into_iter().flat_map(|u| u.files).collect();
                copy_files(&files, &p.input, &p.output).map_err(&fail)?;
                report
            }
            Stage::Dedup => {
                let files = load_files(&p.input).map_err(|e| fail(e.to_string()))?;
                let mut outcome = deduplicate(files);
                reset_dir(&p.output).map_err(|e| fail(e.to_string()))?;
                copy_survivors(&mut outcome, &p.input, &p.output);
                let groups = self
                    .config
                    .work
                    .join(format!("{}.groups.json", stage_dir_name(p.stage)));
                write_json(&groups, &outcome.group_report()).map_err(|e| fail(e.to_string()))?;
                outcome.report
            }
            Stage::Syntax => {
                let mut backend = self.config.compiler_backend()?;
                if self.config.syntax.backend == BackendKind::External {
                    backend = backend.with_source_root(&p.input);
                }
                backend
                    .ensure_available()
                    .map_err(|e| fail(e.to_string()))?;
                let patterns = DiagnosticPatterns::from_config(&self.config.syntax.patterns)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let files = load_files(&p.input).map_err(|e| fail(e.to_string()))?;
                let out = run_syntax_stage(files, &backend, &patterns);
                copy_files(&out.passed, &p.input, &p.output).map_err(&fail)?;
                let log = self
                    .config
                    .work
                    .join(format!("{}.log.jsonl", stage_dir_name(p.stage)));
                write_jsonl(&log, &out.log).map_err(|e| fail(e.to_string()))?;
                out.report
            }
            Stage::Synthesis => {
                let backend = self.config.synth_backend(&p.input)?;
                backend
                    .ensure_available()
                    .map_err(|e| fail(e.to_string()))?;
                let pattern = self.config.failure_pattern()?;
                let limits = self.config.synth_limits()?;
                let projects = load_tree(&p.input).map_err(|e| fail(e.to_string()))?;
                let out = run_synth_stage(&projects, &backend, &pattern, limits);
                copy_files(&out.passed, &p.input, &p.output).map_err(&fail)?;
                let log = self
                    .config
                    .work
                    .join(format!("{}.log.jsonl", stage_dir_name(p.stage)));
                write_jsonl(&log, &out.logs).map_err(|e| fail(e.to_string()))?;
                out.report
            }
            Stage::DbValidation => self.run_db(p)?,
        };
        write_stage_files(&self.config.work, &report).map_err(&fail)?;
        summarize(&report, started);
        self.reports.push(report);
        Ok(())
    }

    fn chat_client(&self) -> ChatClient {
        ChatClient::new(self.config.extract.endpoint.clone().unwrap_or_default())
    }

    fn run_db(&mut self, p: &StagePlan) -> Result<StageReport, PipelineError> {
        let fail = failure(p.stage);
        let settings = &self.config.extract;
        let client = match settings.describer {
            ModelUse::Model => DescriptionClient::ExternalModel(self.chat_client()),
            ModelUse::Offline => DescriptionClient::TemplateFallback,
        };
        let files = load_files(&p.input).map_err(|e| fail(e.to_string()))?;
        let extracted = extract_project(
            &files,
            &client,
            ExtractOptions {
                token_rule: settings.token_rule,
            },
        );

        let mut store = open_store(&self.config.store_url(), self.config.store_config())
            .map_err(|e| fail(e.to_string()))?;
        store.init_schema().map_err(|e| fail(e.to_string()))?;
        if self.config.store.reset {
            store.reset().map_err(|e| fail(e.to_string()))?;
        }
        let out = run_db_stage(store.as_mut(), extracted.modules, extracted.report)
            .map_err(|e| fail(e.to_string()))?;

        reset_dir(&p.output).map_err(|e| fail(e.to_string()))?;
        let mut namer = RecordFileNamer::new();
        for (_, m) in &out.inserted {
            let path = p.output.join(namer.next_name(&m.record.module_name));
            let mut text = serialize_record(&m.record);
            text.push('\n');
            fs::write(&path, text).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        }
        self.finish_store(store.as_mut()).map_err(&fail)?;
        Ok(out.report)
    }

    /// Exports and statistics over the validated store.
    fn finish_store(&mut self, store: &mut dyn ModuleStore) -> Result<(), String> {
        let export = self.config.work.join("export");
        let n = export_jsonl(store, &export.join("records.jsonl")).map_err(|e| e.to_string())?;
        let pairs = export_pairs(
            store,
            self.config.export.budget,
            &export.join("pairs.jsonl"),
        )
        .map_err(|e| e.to_string())?;
        let records: Vec<_> = store
            .query_modules(&QueryFilter::default())
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|m| m.record)
            .collect();
        let stats = match self.config.extract.classifier {
            ModelUse::Offline => analytics::compute_stats(&records),
            ModelUse::Model => {
                let client = self.chat_client();
                let classifier = Classifier::ExternalModel(&client);
                let classes: Vec<u8> = records
                    .iter()
                    .map(|r| analytics::classify_module(r, &classifier, Taxonomy::builtin()))
                    .collect();
                analytics::compute_stats_with_classes(&records, &classes)
            }
        };
        self.modules = Some(n);
        self.pairs = Some(pairs);
        self.stats = Some(stats);
        Ok(())
    }
}

fn execute(
    config: &PipelineConfig,
    opts: &RunOptions,
    plans: Vec<StagePlan>,
) -> Result<PipelineRun, PipelineError> {
    fs::create_dir_all(&config.work).map_err(|e| ConfigError::Io {
        path: config.work.clone(),
        source: e,
    })?;
    let mut runner = Runner {
        config,
        reports: Vec::new(),
        modules: None,
        pairs: None,
        stats: None,
    };
    let mut halted = None;
    for p in &plans {
        if let Err(e) = runner.run_stage(p) {
            log::error!("{e}; downstream stages skipped");
            halted = Some(e);
            break;
        }
    }
    let report_dir = opts
        .report_dir
        .clone()
        .unwrap_or_else(|| config.report_dir());
    let files = render_report(runner.stats.as_ref(), &runner.reports, &report_dir);
    if let Some(e) = halted {
        return Err(e);
    }
    let files = files.map_err(|e| PipelineError::StageFailure {
        stage: plans.last().map_or(Stage::Filter, |p| p.stage),
        detail: format!("report: {e}"),
    })?;
    Ok(PipelineRun {
        plan: plans,
        reports: runner.reports,
        modules: runner.modules,
        pairs: runner.pairs,
        stats: runner.stats,
        report_files: Some(files),
    })
}

/// Runs the enabled stages in order. A failing stage stops the run; the
/// consolidated report still covers the stages that completed.
pub fn run_pipeline(
    config: &PipelineConfig,
    opts: &RunOptions,
) -> Result<PipelineRun, PipelineError> {
    let plans = plan(config, opts)?;
    if opts.dry_run {
        // Resolve backends so a dry run reports missing tools and bad stubs.
        for p in &plans {
            match p.stage {
                Stage::Syntax => {
                    let b: CompilerBackend = config.compiler_backend()?;
                    b.ensure_available()
                        .map_err(|e| failure(p.stage)(e.to_string()))?;
                }
                Stage::Synthesis => {
                    config
                        .synth_backend(&p.input)?
                        .ensure_available()
                        .map_err(|e| failure(p.stage)(e.to_string()))?;
                }
                _ => {}
            }
        }
        return Ok(PipelineRun {
            plan: plans,
            reports: Vec::new(),
            modules: None,
            pairs: None,
            stats: None,
            report_files: None,
        });
    }
    if config.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        pool.install(|| execute(config, opts, plans))
    } else {
        execute(config, opts, plans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(root: &Path, files: &[(&str, &str)]) {
        for (p, c) in files {
            let path = root.join(p);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, c).unwrap();
        }
    }

    fn config(root: &Path) -> PipelineConfig {
        PipelineConfig {
            input: root.join("raw"),
            work: root.join("work"),
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn plan_requires_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        assert!(plan(&cfg, &RunOptions::default()).is_err());
        fs::create_dir_all(&cfg.input).unwrap();
        assert_eq!(plan(&cfg, &RunOptions::default()).unwrap().len(), 5);
        let only = RunOptions {
            only: Some(Stage::Dedup),
            ..Default::default()
        };
        assert!(plan(&cfg, &only).is_err());
        fs::create_dir_all(cfg.work.join("01_filtered")).unwrap();
        let p = plan(&cfg, &only).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].input, cfg.work.join("01_filtered"));
    }

    #[test]
    fn small_run_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        tree(
            &cfg.input,
            &[
                ("p/rtl/add.v", "module add(input [3:0] a, b, output [4:0] s);\n  assign s = a + b;\nendmodule\n"),
                ("p/rtl/add_copy.v", "module add(input [3:0] a, b, output [4:0] s);\n  assign s = a + b;\nendmodule\n"),
                ("p/sim/tb.v", "module tb; initial $display(\"x\"); endmodule\n"),
            ],
        );
        let run = run_pipeline(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(run.reports.len(), 5);
        assert_eq!(run.modules, Some(1));
        assert!(cfg.work.join("05_records/add.json").is_file());
        assert!(cfg.work.join("report/table1.txt").is_file());
        assert_eq!(run.reports[1].rejections.len(), 1);
    }

    #[test]
    fn missing_synthesizer_halts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        tree(&cfg.input, &[("p/a.v", "module a(input x); endmodule\n")]);
        cfg.synthesis.backend = BackendKind::External;
        cfg.synthesis.tool = "definitely-not-a-synthesizer".into();
        match run_pipeline(&cfg, &RunOptions::default()) {
            Err(PipelineError::StageFailure { stage, .. }) => assert_eq!(stage, Stage::Synthesis),
            other => panic!("unexpected {other:?}"),
        }
        assert!(!cfg.work.join("04_synth_ok").exists());
        assert!(cfg.work.join("report/table1.txt").is_file());
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use forge_core::analytics::{self, render_report, render_table};
use forge_core::config::PipelineConfig;
use forge_core::dedup::{copy_survivors, deduplicate};
use forge_core::extract::{extract_project, DescriptionClient, ExtractOptions, TokenRule};
use forge_core::filter::{scan_projects, FilterConfig};
use forge_core::fsutil::{
    copy_preserving, load_files, load_tree, reset_dir, write_json, write_jsonl,
};
use forge_core::instruct::{export_pairs, Preset};
use forge_core::llm::{ChatClient, EndpointConfig};
use forge_core::model::{serialize_record, RecordFileNamer, SourceFile, Stage, StageReport};
use forge_core::pipeline::{run_pipeline, RunOptions};
use forge_core::store::{
    export_jsonl, import_json_dir, import_jsonl, open_store, ImportCounts, ModuleStore,
    QueryFilter, StoreConfig, DB_URL_ENV,
};
use forge_core::syntax::{
    run_syntax_stage, CompilerBackend, DiagnosticPatterns, PatternConfig, StubCompiler,
};
use forge_core::synth::{run_synth_stage, FailurePattern, StubSynth, SynthBackend, SynthLimits};

#[derive(Parser)]
#[command(name = "forge", version, about = "Verilog corpus curation pipeline")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Validate inputs and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Report destination: a directory for `run` and `stats`, a JSON file
    /// for single stages.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Keyword filtering of a raw corpus tree.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        #[arg(long, env = "FORGE_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact-duplicate removal.
    Dedup {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-file syntax check.
    Syntax {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "icarus")]
        backend: SyntaxBackendName,
        #[arg(long, default_value = "iverilog")]
        tool_path: PathBuf,
        /// Stub script for `--backend stub`.
        #[arg(long)]
        stub: Option<PathBuf>,
        #[arg(long, default_value_t = 60)]
        timeout_secs: u64,
    },
    /// Per-project synthesis check.
    Synth {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "yosys")]
        backend: SynthBackendName,
        #[arg(long, default_value = "yosys")]
        tool_path: PathBuf,
        #[arg(long)]
        stub: Option<PathBuf>,
        #[arg(long, default_value_t = 300)]
        timeout_secs: u64,
        #[arg(long, default_value_t = 64)]
        max_scenarios: usize,
        #[arg(long, default_value_t = 8)]
        probe_budget: usize,
    },
    /// Module metadata extraction to one JSON file per module.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "fallback")]
        describe: Describe,
        /// Endpoint settings (TOML) for `--describe external`.
        #[arg(long)]
        endpoint: Option<PathBuf>,
        #[arg(long, default_value = "statement")]
        token_rule: TokenRuleName,
    },
    /// Module store maintenance.
    Db {
        /// Store URL or pipeline config file.
        #[arg(long, env = DB_URL_ENV)]
        db: Option<String>,
        #[command(subcommand)]
        action: DbAction,
    },
    /// Corpus statistics and the consolidated report.
    Stats {
        #[arg(long, env = DB_URL_ENV)]
        db: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Directory holding `*.report.json` stage reports for the table.
        #[arg(long)]
        stages: Option<PathBuf>,
    },
    /// Instruction pairs within a token budget.
    ExportPairs {
        #[arg(long, env = DB_URL_ENV)]
        db: Option<String>,
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        work: Option<PathBuf>,
        #[arg(long)]
        only: Option<StageName>,
        /// Input directory for the first stage that runs.
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DbAction {
    Init,
    Insert {
        #[arg(long)]
        from: PathBuf,
    },
    Export {
        #[arg(long)]
        to: PathBuf,
    },
    Import {
        #[arg(long)]
        from: PathBuf,
    },
    Query {
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        min_tokens: Option<u64>,
        #[arg(long)]
        max_tokens: Option<u64>,
        #[arg(long)]
        min_ports: Option<u64>,
        #[arg(long)]
        max_ports: Option<u64>,
        #[arg(long)]
        has_comments: Option<bool>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SyntaxBackendName {
    Icarus,
    Stub,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthBackendName {
    Yosys,
    Stub,
}

#[derive(Clone, Copy, ValueEnum)]
enum Describe {
    External,
    Fallback,
}

#[derive(Clone, Copy, ValueEnum)]
enum TokenRuleName {
    Statement,
    Punctuation,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageName {
    Filter,
    Dedup,
    Syntax,
    Synth,
    Extract,
}

impl From<StageName> for Stage {
    fn from(s: StageName) -> Stage {
        match s {
            StageName::Filter => Stage::Filter,
            StageName::Dedup => Stage::Dedup,
            StageName::Syntax => Stage::Syntax,
            StageName::Synth => Stage::Synthesis,
            StageName::Extract => Stage::DbValidation,
        }
    }
}

fn beside(out: &Path, suffix: &str) -> PathBuf {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{name}{suffix}"))
}

fn finish_stage(report: &StageReport, out: &Path, report_path: Option<&Path>) -> Result<()> {
    let path = report_path.map_or_else(|| beside(out, ".report.json"), Path::to_path_buf);
    write_json(&path, report).with_context(|| format!("writing {}", path.display()))?;
    print!("{}", render_table(std::slice::from_ref(report)));
    Ok(())
}

fn copy_kept(files: &[SourceFile], from: &Path, to: &Path) -> Result<()> {
    reset_dir(to)?;
    for f in files {
        copy_preserving(&from.join(&f.path), &to.join(&f.path))
            .with_context(|| format!("copying {}", f.path))?;
    }
    Ok(())
}

/// `--db` accepts a store URL or a pipeline config file naming one.
fn store_from(db: Option<&str>) -> Result<Box<dyn ModuleStore>> {
    let db = db.ok_or_else(|| anyhow!("no store given: pass --db or set {DB_URL_ENV}"))?;
    let (url, config) = if db.ends_with(".toml") && Path::new(db).is_file() {
        let cfg = PipelineConfig::from_file(Path::new(db))?;
        (cfg.store_url(), cfg.store_config())
    } else {
        (db.to_string(), StoreConfig::default())
    };
    let mut store = open_store(&url, config)?;
    store.init_schema()?;
    Ok(store)
}

fn print_import(counts: &ImportCounts) {
    println!(
        "{} read, {} inserted, {} rejected",
        counts.lines,
        counts.inserted,
        counts.rejected.len()
    );
    for (line, reason) in &counts.rejected {
        println!("  entry {line}: {reason}");
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon_pool(cli.jobs)?;
    }
    let report = cli.report.as_deref();
    match cli.command {
        Command::Ingest { root, config, out } => {
            let cfg = match &config {
                Some(path) => FilterConfig::from_file(path)?,
                None => FilterConfig::default(),
            };
            if cli.dry_run {
                println!("filter {} -> {}", root.display(), out.display());
                return Ok(());
            }
            let (projects, stage) = scan_projects(&root, &cfg)?;
            let files: Vec<SourceFile> = projects.into_iter().flat_map(|p| p.files).collect();
            copy_kept(&files, &root, &out)?;
            finish_stage(&stage, &out, report)
        }
        Command::Dedup { input, out } => {
            if cli.dry_run {
                println!("dedup {} -> {}", input.display(), out.display());
                return Ok(());
            }
            let mut outcome = deduplicate(load_files(&input)?);
            reset_dir(&out)?;
            copy_survivors(&mut outcome, &input, &out);
            let groups = report.map_or_else(|| beside(&out, ".groups.json"), Path::to_path_buf);
            write_json(&groups, &outcome.group_report())?;
            finish_stage(&outcome.report, &out, None)
        }
        Command::Syntax {
            input,
            out,
            backend,
            tool_path,
            stub,
            timeout_secs,
        } => {
            let backend = match backend {
                SyntaxBackendName::Icarus => CompilerBackend::icarus(tool_path)
                    .with_source_root(&input)
                    .with_timeout(Duration::from_secs(timeout_secs)),
                SyntaxBackendName::Stub => CompilerBackend::Stub(match stub {
                    Some(p) => StubCompiler::from_toml(&fs::read_to_string(&p)?)?,
                    None => StubCompiler::default(),
                }),
            };
            backend.ensure_available()?;
            if cli.dry_run {
                println!("syntax {} -> {}", input.display(), out.display());
                return Ok(());
            }
            let patterns = DiagnosticPatterns::from_config(&PatternConfig::default())?;
            let result = run_syntax_stage(load_files(&input)?, &backend, &patterns);
            copy_kept(&result.passed, &input, &out)?;
            write_jsonl(&beside(&out, ".log.jsonl"), &result.log)?;
            finish_stage(&result.report, &out, report)
        }
        Command::Synth {
            input,
            out,
            backend,
            tool_path,
            stub,
            timeout_secs,
            max_scenarios,
            probe_budget,
        } => {
            let backend = match backend {
                SynthBackendName::Yosys => SynthBackend::External {
                    tool: tool_path,
                    timeout: Duration::from_secs(timeout_secs),
                    source_root: input.clone(),
                },
                SynthBackendName::Stub => SynthBackend::Stub(match stub {
                    Some(p) => StubSynth::from_toml(&fs::read_to_string(&p)?)?,
                    None => StubSynth::default(),
                }),
            };
            backend.ensure_available()?;
            if max_scenarios == 0 || probe_budget == 0 {
                bail!("--max-scenarios and --probe-budget must be positive");
            }
            if cli.dry_run {
                println!("synth {} -> {}", input.display(), out.display());
                return Ok(());
            }
            let limits = SynthLimits {
                max_scenarios,
                probe_budget,
            };
            let result = run_synth_stage(
                &load_tree(&input)?,
                &backend,
                &FailurePattern::default(),
                limits,
            );
            copy_kept(&result.passed, &input, &out)?;
            write_jsonl(&beside(&out, ".log.jsonl"), &result.logs)?;
            finish_stage(&result.report, &out, report)
        }
        Command::Extract {
            input,
            out,
            describe,
            endpoint,
            token_rule,
        } => {
            let client = match describe {
                Describe::Fallback => DescriptionClient::TemplateFallback,
                Describe::External => {
                    DescriptionClient::ExternalModel(ChatClient::new(match &endpoint {
                        Some(p) => EndpointConfig::from_file(p)?,
                        None => EndpointConfig::default(),
                    }))
                }
            };
            if cli.dry_run {
                println!("extract {} -> {}", input.display(), out.display());
                return Ok(());
            }
            let token_rule = match token_rule {
                TokenRuleName::Statement => TokenRule::Statement,
                TokenRuleName::Punctuation => TokenRule::Punctuation,
            };
            let result =
                extract_project(&load_files(&input)?, &client, ExtractOptions { token_rule });
            reset_dir(&out)?;
            let mut namer = RecordFileNamer::new();
            for m in &result.modules {
                let mut text = serialize_record(&m.record);
                text.push('\n');
                fs::write(out.join(namer.next_name(&m.record.module_name)), text)?;
            }
            println!(
                "{} modules extracted, {} failures",
                result.modules.len(),
                result.report.rejections.len()
            );
            let path = report.map_or_else(|| beside(&out, ".extract.json"), Path::to_path_buf);
            write_json(&path, &result.report)?;
            Ok(())
        }
        Command::Db { db, action } => {
            let mut store = store_from(db.as_deref())?;
            match action {
                DbAction::Init => println!("schema ready"),
                DbAction::Insert { from } => print_import(&import_json_dir(store.as_mut(), &from)?),
                DbAction::Import { from } => print_import(&import_jsonl(store.as_mut(), &from)?),
                DbAction::Export { to } => {
                    println!("{} records written", export_jsonl(store.as_mut(), &to)?)
                }
                DbAction::Query {
                    name,
                    min_tokens,
                    max_tokens,
                    min_ports,
                    max_ports,
                    has_comments,
                } => {
                    let range = |lo: Option<u64>, hi: Option<u64>| {
                        (lo.is_some() || hi.is_some())
                            .then(|| (lo.unwrap_or(0), hi.unwrap_or(u64::MAX)))
                    };
                    let filter = QueryFilter {
                        name_pattern: name,
                        tokens: range(min_tokens, max_tokens),
                        ports: range(min_ports, max_ports),
                        has_comments,
                    };
                    for m in store.query_modules(&filter)? {
                        println!("{}", serde_json::json!({"id": m.id, "record": m.record}));
                    }
                }
            }
            Ok(())
        }
        Command::Stats { db, out, stages } => {
            let mut store = store_from(db.as_deref())?;
            let records: Vec<_> = store
                .query_modules(&QueryFilter::default())?
                .into_iter()
                .map(|m| m.record)
                .collect();
            let stats: forge_core::Stats = analytics::compute_stats(&records);
            let mut reports = Vec::new();
            if let Some(dir) = stages {
                let mut paths: Vec<_> = fs::read_dir(&dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.to_string_lossy().ends_with(".report.json"))
                    .collect();
                paths.sort();
                for p in paths {
                    let r: StageReport = serde_json::from_str(&fs::read_to_string(&p)?)
                        .with_context(|| format!("reading {}", p.display()))?;
                    reports.push(r);
                }
                reports.sort_by_key(|r| r.stage);
            }
            let files = render_report(Some(&stats), &reports, &out)?;
            println!(
                "{} modules; report in {}",
                stats.modules,
                files.json.display()
            );
            Ok(())
        }
        Command::ExportPairs {
            db,
            budget,
            preset,
            out,
        } => {
            let budget = match (budget, preset.as_deref()) {
                (Some(b), _) => b,
                (None, Some(name)) => Preset::parse(name)
                    .ok_or_else(|| anyhow!("unknown preset `{name}`"))?
                    .budget(),
                (None, None) => bail!("pass --budget or --preset"),
            };
            let mut store = store_from(db.as_deref())?;
            let counts = export_pairs(store.as_mut(), budget, &out)?;
            println!(
                "{} pairs written, {} over budget",
                counts.emitted, counts.skipped
            );
            Ok(())
        }
        Command::Run {
            config,
            work,
            only,
            input,
        } => {
            let mut cfg = PipelineConfig::from_file(&config)?;
            if let Some(w) = work {
                cfg.work = w;
            }
            if cli.jobs > 0 {
                cfg.jobs = cli.jobs;
            }
            let opts = RunOptions {
                only: only.map(Stage::from),
                input_override: input,
                dry_run: cli.dry_run,
                report_dir: cli.report.clone(),
            };
            let result = run_pipeline(&cfg, &opts)?;
            if cli.dry_run {
                for p in &result.plan {
                    println!(
                        "{}: {} -> {}",
                        p.stage.label(),
                        p.input.display(),
                        p.output.display()
                    );
                }
                return Ok(());
            }
            print!("{}", render_table(&result.reports));
            if let Some(n) = result.modules {
                println!("{n} modules in store");
            }
            Ok(())
        }
    }
}

fn rayon_pool(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

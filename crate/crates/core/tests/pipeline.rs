//! Full runs over the bundled fixture corpus with stub tools.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use forge_core::config::PipelineConfig;
use forge_core::fsutil::load_files;
use forge_core::instruct::InstructionPair;
use forge_core::pipeline::{run_pipeline, PipelineError, RunOptions};
use forge_core::{deserialize_record, Stage};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn config(work: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::from_file(&fixtures().join("forge.toml")).unwrap();
    cfg.work = work.to_path_buf();
    cfg
}

fn listing(dir: &Path) -> BTreeSet<String> {
    load_files(dir)
        .unwrap()
        .into_iter()
        .map(|f| f.path)
        .collect()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const SYNTH_OK: &[&str] = &[
    "alu_core/rtl/alu.v",
    "counter_proj/rtl/counter_b.v",
    "counter_proj/rtl/top.v",
    "crypto/rtl/aes_sbox.v",
    "crypto/rtl/xor_key.v",
    "dsp/rtl/fir_filter.v",
    "dsp/rtl/mac_unit.v",
    "gates/and2.v",
    "gates/or2.v",
    "misc/rtl/adder_good.v",
    "misc/rtl/bus_if.v",
    "misc/rtl/dec.v",
    "misc/rtl/empty_mod.v",
    "misc/rtl/filler_cell.v",
    "misc/rtl/mux_heartbeat.v",
    "uart/rtl/uart_rx.v",
    "uart/rtl/uart_top.v",
    "uart/rtl/uart_tx.v",
];

#[test]
fn stage_survivors_match_the_planted_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path();
    let run = run_pipeline(&config(work), &RunOptions::default()).unwrap();

    let mut filtered: BTreeSet<String> = SYNTH_OK.iter().map(|s| s.to_string()).collect();
    filtered.extend(
        [
            "alu_core/rtl/alu_copy.v",
            "misc/rtl/and2.v",
            "crypto/rtl/broken.v",
            "misc/rtl/adder_bad.v",
            "counter_proj/rtl/counter_a.v",
            "bad_synth/rtl/latchy.v",
            "bad_synth/rtl/glue.v",
        ]
        .map(String::from),
    );
    assert_eq!(listing(&work.join("01_filtered")), filtered);

    let mut unique = filtered.clone();
    unique.remove("alu_core/rtl/alu_copy.v");
    unique.remove("misc/rtl/and2.v");
    assert_eq!(listing(&work.join("02_unique")), unique);

    let mut syntax = unique.clone();
    syntax.remove("crypto/rtl/broken.v");
    syntax.remove("misc/rtl/adder_bad.v");
    assert_eq!(listing(&work.join("03_syntax_ok")), syntax);

    assert_eq!(listing(&work.join("04_synth_ok")), set(SYNTH_OK));

    let names: BTreeSet<String> = fs::read_dir(work.join("05_records"))
        .unwrap()
        .map(|e| {
            let text = fs::read_to_string(e.unwrap().path()).unwrap();
            deserialize_record(&text).unwrap().module_name
        })
        .collect();
    assert!(names.contains("dec") && names.contains("filler_cell"));
    assert!(!names.contains("bus_if") && !names.contains("empty_mod"));
    assert_eq!(run.modules, Some(16));

    let db = &run.reports[4];
    assert_eq!(db.stage, Stage::DbValidation);
    let reasons: Vec<&str> = db.rejections.iter().map(|r| r.reason.as_str()).collect();
    assert_eq!(
        reasons,
        [
            "unresolved width on port addr: [`BUS_W-1:0]",
            "no ports captured"
        ]
    );
}

#[test]
fn exports_follow_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(&config(dir.path()), &RunOptions::default()).unwrap();
    let records = fs::read_to_string(dir.path().join("export/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 16);
    let pairs: Vec<InstructionPair> = fs::read_to_string(dir.path().join("export/pairs.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(pairs.len(), 16);
    assert_eq!(run.pairs.map(|c| c.emitted), Some(16));
    let dec = pairs
        .iter()
        .find(|p| p.prompt.contains("module named dec "))
        .unwrap();
    assert!(dec
        .prompt
        .contains("input [1:0] I, input v, output [3:0] y"));
    assert!(dec.response.starts_with("module dec ("));
    for name in [
        "report.json",
        "table1.txt",
        "hist_lines.csv",
        "hist_classes.csv",
    ] {
        assert!(dir.path().join("report").join(name).is_file(), "{name}");
    }
}

#[test]
fn only_resumes_from_an_existing_stage_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let only = |stage| RunOptions {
        only: Some(stage),
        ..Default::default()
    };
    assert!(matches!(
        run_pipeline(&cfg, &only(Stage::Syntax)),
        Err(PipelineError::Config(_))
    ));

    run_pipeline(&cfg, &only(Stage::Filter)).unwrap();
    run_pipeline(&cfg, &only(Stage::Dedup)).unwrap();
    let run = run_pipeline(&cfg, &only(Stage::Syntax)).unwrap();
    assert_eq!(run.reports.len(), 1);
    assert_eq!(run.reports[0].rejections.len(), 2);
    assert!(!dir.path().join("04_synth_ok").exists());
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir.path().join("work"));
    let run = run_pipeline(
        &cfg,
        &RunOptions {
            dry_run: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(run.plan.len(), 5);
    assert!(!cfg.work.exists());
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge"))
        .args(args)
        .env_remove("FORGE_DB_URL")
        .env_remove("FORGE_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = forge(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_by_stage_matches_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = fixtures();
    let corpus = fx.join("corpus");

    ok(&["ingest", "--root", s(&corpus), "--out", s(&d.join("f"))]);
    ok(&["dedup", "--in", s(&d.join("f")), "--out", s(&d.join("u"))]);
    assert!(d.join("u.groups.json").is_file());
    let syntax_stub = fx.join("syntax_stub.toml");
    ok(&[
        "syntax",
        "--in",
        s(&d.join("u")),
        "--out",
        s(&d.join("s")),
        "--backend",
        "stub",
        "--stub",
        s(&syntax_stub),
    ]);
    let synth_stub = fx.join("synth_stub.toml");
    ok(&[
        "synth",
        "--in",
        s(&d.join("s")),
        "--out",
        s(&d.join("y")),
        "--backend",
        "stub",
        "--stub",
        s(&synth_stub),
    ]);
    ok(&[
        "extract",
        "--in",
        s(&d.join("y")),
        "--out",
        s(&d.join("json")),
    ]);
    let db = d.join("m.db");
    let inserted = ok(&["db", "--db", s(&db), "insert", "--from", s(&d.join("json"))]);
    assert!(
        inserted.starts_with("18 read, 16 inserted, 2 rejected"),
        "{inserted}"
    );

    ok(&[
        "run",
        "--config",
        s(&fx.join("forge.toml")),
        "--work",
        s(&d.join("work")),
    ]);
    for (stage, full) in [
        ("f", "01_filtered"),
        ("u", "02_unique"),
        ("s", "03_syntax_ok"),
        ("y", "04_synth_ok"),
    ] {
        let a = fs::read_to_string(d.join(format!("{stage}.report.json"))).unwrap();
        let b = fs::read_to_string(d.join("work").join(format!("{full}.report.json"))).unwrap();
        assert_eq!(a, b, "{stage}");
    }

    ok(&[
        "db",
        "--db",
        s(&db),
        "export",
        "--to",
        s(&d.join("r.jsonl")),
    ]);
    // Same records; insertion order differs between the two routes.
    let sorted = |p: PathBuf| {
        let mut lines: Vec<String> = fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines.sort();
        lines
    };
    assert_eq!(
        sorted(d.join("r.jsonl")),
        sorted(d.join("work/export/records.jsonl"))
    );

    let hits = ok(&[
        "db",
        "--db",
        &format!("sqlite://{}", s(&db)),
        "query",
        "--name",
        "uart_t",
    ]);
    assert_eq!(hits.lines().count(), 2);

    ok(&[
        "stats",
        "--db",
        s(&db),
        "--out",
        s(&d.join("rep")),
        "--stages",
        s(d),
    ]);
    let table = fs::read_to_string(d.join("rep/table1.txt")).unwrap();
    assert_eq!(table.lines().count(), 2 + 4);
    assert!(table
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("Initial Filtering"));

    let pairs = ok(&[
        "export-pairs",
        "--db",
        s(&db),
        "--preset",
        "codellama7b",
        "--out",
        s(&d.join("p.jsonl")),
    ]);
    assert!(pairs.starts_with("16 pairs written"));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let missing = forge(&[
        "dedup",
        "--in",
        s(&d.join("nope")),
        "--out",
        s(&d.join("o")),
    ]);
    assert!(!missing.status.success());

    let no_db = forge(&["db", "init"]);
    assert!(!no_db.status.success());
    assert!(String::from_utf8_lossy(&no_db.stderr).contains("FORGE_DB_URL"));

    fs::create_dir_all(d.join("in/p")).unwrap();
    fs::write(d.join("in/p/a.v"), "module a(input x); endmodule\n").unwrap();
    let tool = forge(&[
        "syntax",
        "--in",
        s(&d.join("in")),
        "--out",
        s(&d.join("o")),
        "--tool-path",
        "no-such-compiler",
    ]);
    assert!(!tool.status.success());
    assert!(String::from_utf8_lossy(&tool.stderr).contains("no-such-compiler"));
}

#[test]
fn dry_run_prints_the_plan() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("w");
    let plan = ok(&[
        "--dry-run",
        "run",
        "--config",
        s(&fixtures().join("forge.toml")),
        "--work",
        s(&work),
    ]);
    assert_eq!(plan.lines().count(), 5);
    assert!(plan.starts_with("Initial Filtering: "));
    assert!(!work.exists());
}

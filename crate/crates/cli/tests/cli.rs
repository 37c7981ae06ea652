use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo")
}

/// Copy the demo fixtures so each test owns its state directory.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["kbforge.toml", "world.jsonl", "search.jsonl", "reference.jsonl", "lexicon.csv"] {
        std::fs::copy(demo_dir().join(f), dir.path().join(f)).unwrap();
    }
    dir
}

fn kbforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kbforge"))
        .arg("--config")
        .arg(dir.join("kbforge.toml"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stage_by_stage_run_writes_every_report() {
    let ws = workspace();
    let d = ws.path();
    for args in [
        &["crawl"][..],
        &["consolidate", "relations"],
        &["consolidate", "classes", "--alpha", "1.4", "--high", "0.95", "--low", "0.75"],
        &["taxonomy"],
        &["dedup", "--class", "Person", "--block", "birth_date"],
        &["export"],
        &["eval"],
    ] {
        let o = kbforge(d, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let reports = d.join("state/reports");
    for name in ["crawl", "relations", "classes", "taxonomy", "dedup", "export", "eval", "eval-entities", "eval-overlap"] {
        assert!(reports.join(format!("{name}.json")).exists(), "{name}");
    }
    for name in ["kb.crawl.jsonl", "checkpoint.jsonl", "relations.map.jsonl", "classes.map.jsonl", "taxonomy.json", "kb.jsonl", "merge_report.jsonl", "kb.ttl"] {
        assert!(d.join("state/artifacts").join(name).exists(), "{name}");
    }
    assert!(d.join("state/state.json").exists());
    assert!(!d.join("state/lock").exists());

    let o = kbforge(d, &["export"]);
    assert!(stdout(&o).contains("UpToDate"), "{}", stdout(&o));
    let o = kbforge(d, &["--json", "eval", "bias", "--sample", "5", "--seed", "3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v[0]["stage"], "eval-bias");
    assert_eq!(v[0]["seed"], "Vannevar Bush");
    assert!(v[0]["config_hash"].as_str().unwrap().len() == 64);
    assert_eq!(v[0]["summary"]["first_name_genders"]["male"], 2);
}

#[test]
fn stats_and_status() {
    let ws = workspace();
    let o = kbforge(ws.path(), &["stats"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kbforge crawl"), "{}", stderr(&o));
    assert!(kbforge(ws.path(), &["run"]).status.success());
    let o = kbforge(ws.path(), &["--json", "stats"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entities"], 11);
    assert_eq!(v["triples"], 43);
    let o = kbforge(ws.path(), &["status"]);
    assert!(stdout(&o).contains("eval       complete"), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let ws = workspace();
    let d = ws.path();
    // dependency error
    let o = kbforge(d, &["taxonomy"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("kbforge consolidate classes"), "{}", stderr(&o));
    // bad arguments
    assert_eq!(kbforge(d, &["consolidate", "verbs"]).status.code(), Some(1));
    assert_eq!(kbforge(d, &["crawl", "--max-depth", "0"]).status.code(), Some(1));
    assert_eq!(kbforge(d, &["--help"]).status.code(), Some(0));
    // provider failure
    std::fs::write(
        d.join("world.jsonl"),
        "{\"template\":\"elicit\",\"key\":\"Vannevar Bush\",\"error\":\"connection reset\"}\n",
    )
    .unwrap();
    let o = kbforge(d, &["crawl"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn crawl_can_stop_after_a_layer_and_continue() {
    let ws = workspace();
    let d = ws.path();
    let o = kbforge(d, &["crawl", "--stop-after-layer", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("Partial"), "{}", stdout(&o));
    assert_eq!(kbforge(d, &["consolidate", "relations"]).status.code(), Some(1));
    let o = kbforge(d, &["crawl"]);
    assert!(stdout(&o).contains("Ran"), "{}", stdout(&o));
    assert!(kbforge(d, &["consolidate", "relations"]).status.success());
}

#[test]
fn command_line_overrides_the_config() {
    let ws = workspace();
    let d = ws.path();
    let world = d.join("world.jsonl");
    let o = kbforge(
        d,
        &["crawl", "--seed", "Memex", "--max-depth", "1", "--world", world.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = kbforge(d, &["--json", "stats"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entities"], 1);
}

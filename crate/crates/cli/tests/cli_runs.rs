use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn semctx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semctx")).args(args).output().expect("spawn semctx")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn exp2_writes_phase_table_and_hashed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = semctx(&["exp2", "--runs", "2", "--t", "400", "--alpha", "0.5", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let phases = fs::read_to_string(dir.path().join("exp2_phases.csv")).unwrap();
    assert_eq!(phases, "phase,start_t,n_tools\n1,0,4\n2,100,3\n3,200,4\n4,300,5\n");

    let curves = fs::read_to_string(dir.path().join("exp2_curves.csv")).unwrap();
    // header + 2 agents x 400 steps
    assert_eq!(curves.lines().count(), 1 + 2 * 400);

    let m = manifest(dir.path());
    assert_eq!(m["experiment"], "exp2");
    assert_eq!(m["seeds"], serde_json::json!([0, 1]));
    assert_eq!(m["potential_violations"], 0);
    for name in ["exp2_curves.csv", "exp2_phases.csv"] {
        let digest: String = Sha256::digest(fs::read(dir.path().join(name)).unwrap())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(m["outputs"][name], digest.as_str());
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let out = semctx(&["exp1", "--runs", "3", "--t", "300", "--seed", "11", "--jobs", jobs, "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["exp1_curves.csv", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"runs": 4, "t": 200, "alpha": [1.0], "seed": 5}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = semctx(&["exp1", "--config", cfg.to_str().unwrap(), "--runs", "2", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = manifest(&out_dir);
    assert_eq!(m["seeds"], serde_json::json!([5, 6]));
    assert_eq!(m["config"]["alphas"], serde_json::json!([1.0]));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"runz": 4}"#).unwrap();
    let out = semctx(&["exp1", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("runz"), "{}", stderr(&out));
}

#[test]
fn inapplicable_flag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = semctx(&["exp1", "--k", "3", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("does not apply"), "{}", stderr(&out));
}

#[test]
fn remote_backend_without_endpoint_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = semctx(&["icl", "--backend", "remote", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn icl_writes_one_log_per_scenario_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = semctx(&["icl", "--scenario", "mQmA", "--mode", "io,nd", "--runs", "2", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for mode in ["io", "nd"] {
        let log = fs::read_to_string(dir.path().join(format!("icl_mQmA_{mode}.jsonl"))).unwrap();
        let turns: Vec<serde_json::Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(turns.len(), 2 * 28);
        assert_eq!(turns[0]["trial"], 0);
        assert_eq!(turns[28]["trial"], 1);
        assert_eq!(turns[27]["turn"], 28);
        assert_eq!(turns[27]["phase"], 3);
    }
    let m = manifest(dir.path());
    assert_eq!(m["incomplete_trials"], 0);
}

#[test]
fn fireact_reads_catalog_and_queries() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = dir.path().join("catalog.jsonl");
    let queries = dir.path().join("queries.jsonl");
    fs::write(
        &catalog,
        concat!(
            r#"{"name":"Image Resizer","description":"Resize and compress images","ground_truth_for":"q1"}"#,
            "\n",
            r#"{"name":"Text Translator","description":"Translate text between languages","ground_truth_for":"q2"}"#,
            "\n",
            r#"{"name":"Data Analyzer","description":"Analyze datasets and find trends"}"#,
            "\n",
        ),
    )
    .unwrap();
    fs::write(
        &queries,
        concat!(
            r#"{"id":"q1","text":"resize an image"}"#,
            "\n",
            r#"{"id":"q2","text":"translate this text to French"}"#,
            "\n",
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = semctx(&[
        "fireact",
        "--catalog",
        catalog.to_str().unwrap(),
        "--queries",
        queries.to_str().unwrap(),
        "--backend",
        "oracle",
        "--k",
        "2",
        "--mode",
        "nd",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("fireact_accuracy.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "strategy,mode,k,accuracy,recall_at_k,n_queries");
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().any(|r| r.starts_with("all,nd,3,1")), "{csv}");
}

#[test]
fn catalog_without_queries_is_a_usage_error() {
    let out = semctx(&["fireact", "--catalog", "x.jsonl"]);
    assert!(!out.status.success());
}

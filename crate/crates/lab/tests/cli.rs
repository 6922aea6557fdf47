use std::path::Path;

use alloc_lab::cli::{render_markdown, run_with, Cli};
use clap::CommandFactory;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("alloc-lab").chain(args.iter().copied());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn theta_identity_for_poisson() {
    assert_eq!(call(&["theta", "--family", "poisson", "--alpha", "2.5"]), (0, "2.5\n".into(), String::new()));
    let (code, out, _) = call(&["theta", "--family", "geometric", "--alpha", "1,2"]);
    assert_eq!(code, 0);
    assert_eq!(out, "0.5\n0.666666666667\n");
}

#[test]
fn uniform_composition_probability() {
    let (code, out, _) = call(&["prob", "--family", "geometric", "--N", "2", "--n", "2", "--counts", "1,1"]);
    assert_eq!((code, out.as_str()), (0, "0.333333333333\n"));
    let (code, out, _) = call(&["prob", "--family", "geometric", "--N", "10", "--n", "10", "--s", "0"]);
    assert_eq!((code, out.as_str()), (0, "0.473684210526\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(call(&["nonsense"]).0, 1);
    assert_eq!(call(&["theta", "--family", "poisson", "--alpha", "1", "--bogus"]).0, 1);
    assert_eq!(call(&["theta", "--family", "unknown", "--alpha", "1"]).0, 1);
    assert_eq!(call(&["theta", "--family", "geometric", "--alpha", "-1"]).0, 1);
    assert_eq!(call(&["prob", "--family", "poisson", "--N", "2", "--n", "3", "--counts", "1,1"]).0, 1);
    let (code, _, err) = call(&["tail", "--family", "poisson", "--N", "100", "--n", "100", "--s", "0", "--eps-grid", "2"]);
    assert_eq!(code, 1, "{err}");
    let (code, _, err) = call(&["lil", "--family", "poisson", "--alpha", "1", "--s", "0", "--schedule", "list:100,50"]);
    assert_eq!(code, 1, "{err}");
    let (code, _, _) = call(&["slln", "--family", "poisson", "--N", "10", "--n", "10", "--s", "0", "--out", "/nonexistent/dir/r.csv"]);
    assert_eq!(code, 2);
    let (code, out, _) = call(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("identities"));
}

#[test]
fn infeasible_point_is_a_runtime_error_after_reporting() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind": "slln", "scheme": {"colours": [{"family": "binomial(2)", "n": 10}], "N": 10},
            "s": [1], "schedule": [{"N": 10, "n": [10]}, {"N": 3, "n": [9]}], "replications": 2}"#,
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let (code, text, err) = call(&["slln", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2, "{text}{err}");
    assert!(text.contains("error at N=3"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
}

#[test]
fn config_file_run_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind": "slln", "scheme": {"colours": [{"family": "poisson", "n": 500}], "N": 500},
            "s": 1, "replications": 3, "master_seed": 1}"#,
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let (code, _, err) = call(&["slln", "--config", cfg.to_str().unwrap(), "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kind,N,n,s,replication,mu,mu_over_N,E_mu_exact,theory_value,statistic,bound,seed"
    );
    assert_eq!(lines.count(), 3);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["master_seed"], 7);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(json["records"], 3);
}

#[test]
fn identical_argv_gives_identical_output() {
    let args = ["sample", "--family", "poisson,geometric", "--N", "6", "--n", "5,4", "--reps", "3", "--seed", "9"];
    let a = call(&args);
    assert_eq!(a.0, 0);
    assert_eq!(a, call(&args));
    assert!(a.1.starts_with("replication,colour,box_index,count\n"));
    assert_eq!(a.1.lines().count(), 1 + 3 * 2 * 6);
}

#[test]
fn table_cache_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("t.bin");
    let args = [
        "sample", "--family", "binomial(3)", "--N", "5", "--n", "7", "--strategy", "table", "--reps", "4",
        "--table-cache", cache.to_str().unwrap(),
    ];
    let first = call(&args);
    assert_eq!(first.0, 0, "{}", first.2);
    let bytes = std::fs::read(&cache).unwrap();
    let second = call(&args);
    assert_eq!(first, second);
    assert_eq!(bytes, std::fs::read(&cache).unwrap());
    let table = alloc_lab::cache::read_table(&cache).unwrap();
    assert_eq!((table.boxes(), table.n()), (5, 7));
}

#[test]
fn docs_are_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/CLI.md");
    let fresh = render_markdown();
    if std::env::var_os("UPDATE_DOCS").is_some() {
        std::fs::write(&path, &fresh).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).expect("docs/CLI.md exists; run with UPDATE_DOCS=1 to create it");
    assert_eq!(on_disk, fresh, "docs/CLI.md is stale; rerun with UPDATE_DOCS=1");
}

#[test]
fn every_flag_is_documented() {
    let docs = render_markdown();
    let cmd = Cli::command();
    for sub in cmd.get_subcommands() {
        for arg in sub.get_arguments() {
            let Some(long) = arg.get_long() else { continue };
            if long == "help" {
                continue;
            }
            assert!(arg.get_help().is_some(), "{} --{long} has no help text", sub.get_name());
            assert!(docs.contains(&format!("--{long}")), "{} --{long} missing from docs", sub.get_name());
        }
    }
}

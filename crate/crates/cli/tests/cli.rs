use std::process::{Command, Output};

use serde_json::Value;

fn dwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwlab")).args(args).output().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn tmp(name: &str) -> std::path::PathBuf {
    std::env::temp_dir().join(format!("dwlab-cli-{}-{name}", std::process::id()))
}

#[test]
fn norm_single_point_example() {
    let cfg = r#"{"window": {"n": 1, "j_min": 0, "j_max": 4, "root_extent": 1},
                  "space": {"family": "b", "s": 0, "p": 1, "q": 1},
                  "sequence": {"kind": "single_point", "j": 2, "k": [0], "z": [[1, 0]]}}"#;
    let o = dwlab(&["norm", "--config", cfg]);
    assert!(o.status.success());
    assert_eq!(json(&o)["norm"], 0.5);
}

#[test]
fn norm_reads_config_file_and_explicit_entries() {
    let path = tmp("norm.json");
    std::fs::write(
        &path,
        r#"{"window": {"n": 1, "j_min": 0, "j_max": 3, "root_extent": 1},
            "space": {"family": "f", "s": 0, "p": 2, "q": 2},
            "mode": "matrix", "weight": {"kind": "identity", "m": 2},
            "sequence": {"m": 2, "entries": [[[0, [0]], [[3, 0], [0, 4]]]]}}"#,
    )
    .unwrap();
    let o = dwlab(&["norm", "--config", path.to_str().unwrap()]);
    std::fs::remove_file(&path).unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!((json(&o)["norm"].as_f64().unwrap() - 5.0).abs() < 1e-9);
}

#[test]
fn thresholds_table() {
    let o = dwlab(&["thresholds", "--space", r#"{"family": "f", "p": 0.5, "q": 3}"#]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("J      2.00000000000"), "{text}");
    assert!(text.contains("E_min  0.500000000000"), "{text}");
}

#[test]
fn reduce_exact_identity() {
    let o = dwlab(&["reduce", "--weight", "identity", "--p", "2", "--backend", "exact2", "--j-max", "1"]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["passed"], true);
    assert_eq!(v["cubes"].as_array().unwrap().len(), 6);
    assert_eq!(v["cubes"][0]["matrix"][0][0][0], 1.0);
}

#[test]
fn reduce_rejects_exact_backend_off_p2() {
    let o = dwlab(&["reduce", "--weight", "diag-power", "--p", "1", "--backend", "exact2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn transforms_round_trip() {
    let o = dwlab(&["transform", "dwt", "--in", r#"{"kind": "noise", "n": 1, "size": 128, "seed": 5}"#, "--levels", "4"]);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["passed"], true);
    assert!((v["energy"].as_f64().unwrap() - v["coefficient_energy"].as_f64().unwrap()).abs() < 1e-9);
    let o = dwlab(&["transform", "phi", "--in", r#"{"kind": "noise", "n": 1, "size": 128, "seed": 5}"#, "--levels", "7"]);
    assert!(o.status.success());
    assert_eq!(json(&o)["passed"], true);
}

#[test]
fn verify_csv_and_json() {
    let csv = tmp("cex.csv");
    let o = dwlab(&["verify", "CEX-B", "--seed", "7", "--out", csv.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    std::fs::remove_file(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("experiment,series,window,sample,a,b,ratio"));
    assert_eq!(text.lines().count(), 5);

    let a = tmp("a.json");
    let b = tmp("b.json");
    for p in [&a, &b] {
        assert!(dwlab(&["verify", "sob", "--out", p.to_str().unwrap()]).status.success());
    }
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    std::fs::remove_file(&a).unwrap();
    std::fs::remove_file(&b).unwrap();
    assert_eq!(ta, tb);
    let v: Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(v["seed"], 0xDAD1C);
    assert_eq!(v["results"][0]["experiment"], "SOB");
}

#[test]
fn bad_inputs_exit_with_two() {
    assert_eq!(dwlab(&["verify", "NOPE", "--out", "/tmp/unused.json"]).status.code(), Some(2));
    assert_eq!(dwlab(&["norm", "--config", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(dwlab(&["thresholds", "--space", r#"{"family": "x", "p": 1, "q": 1}"#]).status.code(), Some(2));
}

#[test]
fn documented_examples_run() {
    let doc = include_str!("../../../docs/config.md");
    let blocks: Vec<&str> = doc.split("```json").skip(1).map(|b| b.split("```").next().unwrap()).collect();
    assert_eq!(blocks.len(), 5);
    let norm = dwlab(&["norm", "--config", blocks[1]]);
    assert!(norm.status.success(), "{}", String::from_utf8_lossy(&norm.stderr));
    assert!(json(&norm)["norm"].as_f64().unwrap() > 0.0);
    let seq = format!(
        r#"{{"window": {}, "space": {{"family": "b", "s": 0, "p": 2, "q": 2}}, "sequence": {}}}"#,
        r#"{"n": 1, "j_min": 0, "j_max": 3, "root_extent": 2}"#,
        blocks[2]
    );
    assert!(dwlab(&["norm", "--config", &seq]).status.success());
    assert!(dwlab(&["thresholds", "--space", blocks[3]]).status.success());
    let out = tmp("doc.json");
    let v = dwlab(&["verify", "cex-b", "--out", out.to_str().unwrap(), "--config", blocks[4]]);
    let _ = std::fs::remove_file(&out);
    assert!(v.status.success());
}

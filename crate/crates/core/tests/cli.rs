use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gmf")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = gmf(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn gen_ising(dir: &Path) -> String {
    let path = dir.join("ising.json");
    let p = path.to_str().unwrap().to_string();
    let out = gmf(&[
        "gen", "ising", "--height", "4", "--width", "4", "--seed", "7", "--out", &p,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    p
}

fn marginals(report: &Value) -> Vec<Vec<f64>> {
    report["node_marginals"]
        .as_object()
        .unwrap()
        .values()
        .map(|m| m.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

#[test]
fn gen_is_deterministic_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_ising(dir.path());
    let first = std::fs::read(&p).unwrap();
    assert!(dir.path().join("ising.spec.json").exists());
    gen_ising(dir.path());
    assert_eq!(std::fs::read(&p).unwrap(), first);
}

#[test]
fn gmf_report_is_bounded_by_exact() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_ising(dir.path());
    let exact = ok_json(&["exact", "--model", &p]);
    let r = ok_json(&["gmf", "--model", &p, "--partition", "blocks:2x2", "--seed", "7"]);
    assert_eq!(r["algorithm"], "gmf");
    assert_eq!(r["seed"], 7);
    assert!(r["converged"].as_bool().unwrap());
    assert!(r["elbo"].as_f64().unwrap() <= exact["log_partition"].as_f64().unwrap() + 1e-9);
    for m in marginals(&r) {
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let trace: Vec<f64> = r["elbo_trace"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect();
    assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

#[test]
fn mf_matches_singleton_gmf() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_ising(dir.path());
    let a = ok_json(&["mf", "--model", &p, "--seed", "3"]);
    let b = ok_json(&["gmf", "--model", &p, "--partition", "singletons", "--seed", "3"]);
    assert_eq!(a["elbo"], b["elbo"]);
    assert_eq!(a["node_marginals"], b["node_marginals"]);
}

#[test]
fn bp_and_partition_commands() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_ising(dir.path());
    let r = ok_json(&["bp", "--model", &p, "--damping", "0.5"]);
    assert_eq!(r["algorithm"], "bp");
    assert_eq!(marginals(&r).len(), 16);
    let part = ok_json(&["partition", "--model", &p, "--scheme", "blocks:2x2"]);
    let text = part.to_string();
    let file = dir.path().join("part.json");
    std::fs::write(&file, &text).unwrap();
    let a = ok_json(&[
        "gmf",
        "--model",
        &p,
        "--partition",
        file.to_str().unwrap(),
        "--seed",
        "1",
    ]);
    let b = ok_json(&["gmf", "--model", &p, "--partition", "blocks:2x2", "--seed", "1"]);
    assert_eq!(a["elbo"], b["elbo"]);
}

#[test]
fn errors_are_single_line_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let p = gen_ising(dir.path());
    let cases: [(&[&str], i32); 3] = [
        (&["gmf", "--model", &p, "--partition", "blocks:0x2"], 2),
        (&["exact", "--model", "/nonexistent/model.json"], 6),
        (&["bp", "--model", &p, "--damping", "1.5"], 2),
    ];
    for (args, code) in cases {
        let out = gmf(args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.starts_with("error: "), "{err}");
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let out = gmf(&["exact", "--model", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(7));
}

#[test]
fn experiment_outputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{
        "name": "small",
        "num_trials": 4,
        "base_seed": 11,
        "panels": [{
            "name": "grid",
            "model": {"family": "ising", "height": 3, "width": 3, "bias_range": [-0.25, 0.25], "coupling_range": [-2.0, 0.0]},
            "algorithms": [
                {"id": "mf", "kind": "mf"},
                {"id": "rows", "kind": "gmf", "partition": "rows"},
                {"id": "bp", "kind": "bp"}
            ]
        }]
    }"#;
    let cfg = dir.path().join("exp.json");
    std::fs::write(&cfg, config).unwrap();
    let out_dir = dir.path().join("out");
    let run = |target: &Path| {
        let out = gmf(&[
            "experiment",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&out_dir);
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "algorithm,trial,seed,l1,converged,time_ms,elbo");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4 * 3);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    for alg in summary["algorithms"].as_array().unwrap() {
        let name = alg["algorithm"].as_str().unwrap();
        let l1: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == name)
            .map(|r| r[3].parse().unwrap())
            .collect();
        let n = l1.len() as f64;
        let mean = l1.iter().sum::<f64>() / n;
        let std = (l1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert_eq!(alg["n"], 4);
        assert!((alg["mean"].as_f64().unwrap() - mean).abs() < 1e-12, "{name}");
        assert!((alg["std"].as_f64().unwrap() - std).abs() < 1e-12, "{name}");
    }
    let again = dir.path().join("again");
    run(&again);
    let strip = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(5);
                f.join(",")
            })
            .collect()
    };
    assert_eq!(
        strip(csv),
        strip(std::fs::read_to_string(again.join("results.csv")).unwrap())
    );
}

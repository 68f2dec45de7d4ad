use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epidemica"))
}

fn run(args: &[&str], dir: &Path, threads: &str) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .env("EPIDEMICA_THREADS", threads)
        .output()
        .unwrap()
}

fn write_scripted(dir: &Path) {
    fs::write(
        dir.join("stream.csv"),
        "t,src,dst,channel,event_key\n1,0,1,proximity,0\n2,1,2,proximity,1\n",
    )
    .unwrap();
    fs::write(
        dir.join("scripted.json"),
        r#"{
          "source": {"exposure_csv": {"path": "stream.csv", "n_nodes": 3, "horizon_h": 3.0}},
          "attack": {"seeds": {"fixed": [0]}, "target": {"fixed": 2}, "timeout_h": 3.0, "p_prox": 1.0},
          "trials": 1, "master_seed": 0
        }"#,
    )
    .unwrap();
}

fn write_mixing(dir: &Path, p_prox: f64) {
    let text = format!(
        r#"{{
          "source": {{"mixing": {{"n_nodes": 40, "aggregate_rate_h": 0.5, "horizon_h": 30.0}}}},
          "attack": {{"seeds": {{"random_k": 1}}, "target": "random_distinct_from_seeds",
                      "timeout_h": 10.0, "p_prox": {p_prox}}},
          "trials": 300, "master_seed": 17
        }}"#
    );
    fs::write(dir.join("mixing.json"), text).unwrap();
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("no JSON error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn scripted_attack_per_trial_row() {
    let dir = tempfile::tempdir().unwrap();
    write_scripted(dir.path());
    let out = run(
        &[
            "attack",
            "--config",
            "scripted.json",
            "--per-trial",
            "trials.csv",
        ],
        dir.path(),
        "1",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows,
        ["trial_id,success,t_hit,risk,ever_infected", "0,1,2,1,3"]
    );
    assert!(csv.lines().any(|l| l.starts_with("# config_sha256 ")));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["success_rate"], 1.0);
    assert_eq!(summary["mean_risk"], 1.0);
}

#[test]
fn analytic_zero_reliability() {
    let dir = tempfile::tempdir().unwrap();
    write_mixing(dir.path(), 1.0);
    let out = run(
        &[
            "analytic",
            "--config",
            "mixing.json",
            "--model",
            "si",
            "--horizon",
            "20",
            "--out",
            "ode.csv",
            "--reliability",
            "0",
        ],
        dir.path(),
        "0",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["optimal_timeout_h"], 0.0);
    let csv = fs::read_to_string(dir.path().join("ode.csv")).unwrap();
    assert!(csv.lines().any(|l| l == "t,S,I,R,P"));
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_mixing(dir.path(), 0.8);
    let mut seen = Vec::new();
    for (threads, tag) in [("1", "a"), ("4", "b"), ("1", "c")] {
        let curve = format!("curve_{tag}.csv");
        let out = run(
            &[
                "attack",
                "--config",
                "mixing.json",
                "--tg-grid",
                "0:20:5",
                "--out",
                &curve,
            ],
            dir.path(),
            threads,
        );
        assert!(out.status.success());
        seen.push((out.stdout, fs::read(dir.path().join(&curve)).unwrap()));
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn exit_codes_and_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    fs::write(d.join("bad.json"), r#"{"source": {}}"#).unwrap();
    let out = run(
        &["attack", "--config", "bad.json", "--out", "x.csv"],
        d,
        "1",
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "config");
    assert!(!d.join("x.csv").exists());

    fs::write(d.join("trace.csv"), "t_start,t_end,u,v\n1,0.5,0,1\n").unwrap();
    let out = run(
        &[
            "import-trace",
            "--input",
            "trace.csv",
            "--out",
            "o.csv",
            "--map-out",
            "m.csv",
        ],
        d,
        "1",
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(error_line(&out)["message"]
        .as_str()
        .unwrap()
        .contains("line 2"));
    assert!(!d.join("o.csv").exists() && !d.join("m.csv").exists());

    write_mixing(d, 0.0);
    let out = run(
        &[
            "opt-timeout",
            "--config",
            "mixing.json",
            "--reliability",
            "0.5",
        ],
        d,
        "1",
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_line(&out)["error"], "infeasible");

    let out = run(&["attack", "--bogus"], d, "1");
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["attack", "--config", "mixing.json"], d, "x");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn import_and_simulate_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("raw.csv"),
        "t_start,t_end,u,v\n0.5,1.5,1001,2002\n1.0,2.0,2002,3003\n",
    )
    .unwrap();
    fs::write(d.join("raw_social.csv"), "u,v\n1001,3003\n3003,1001\n").unwrap();
    let out = run(
        &[
            "import-trace",
            "--input",
            "raw.csv",
            "--out",
            "trace.csv",
            "--map-out",
            "map.csv",
        ],
        d,
        "1",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = run(
        &[
            "import-social",
            "--input",
            "raw_social.csv",
            "--out",
            "social.csv",
            "--map-in",
            "map.csv",
            "--map-out",
            "map2.csv",
        ],
        d,
        "1",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read_to_string(d.join("map2.csv")).unwrap(),
        "original_id,dense_id\n1001,0\n2002,1\n3003,2\n"
    );
    assert_eq!(
        fs::read_to_string(d.join("social.csv")).unwrap(),
        "u,v\n0,2\n"
    );

    fs::write(
        d.join("cfg.json"),
        r#"{
          "source": {"trace_csv": {"path": "trace.csv"}},
          "social_graph_csv": "social.csv",
          "dual_path": {"p_s": 1.0, "p_l": 0.0, "social_slot_h": 0.5, "horizon_h": 2.0},
          "attack": {"seeds": {"fixed": [0]}, "target": {"fixed": 2}, "timeout_h": 2.0, "p_prox": 1.0},
          "trials": 5, "master_seed": 1
        }"#,
    )
    .unwrap();
    let out = run(
        &["attack", "--config", "cfg.json", "--per-trial", "pt.csv"],
        d,
        "1",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // social only, first slot at 0.5 h
    assert_eq!(v["success_rate"], 1.0);
    let pt = fs::read_to_string(d.join("pt.csv")).unwrap();
    assert!(
        pt.lines().any(|l| l == "0,1,0.5,0.16666666666666666,2"),
        "{pt}"
    );
}

#[test]
fn gen_trace_and_estimate_rate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("m.json"),
        r#"{
          "source": {"mobility": {"n_nodes": 30, "box_length_km": 2.0, "radius_km": 0.1,
                     "v_min_kmh": 4.0, "v_max_kmh": 10.0, "model": "rd", "duration_h": 5.0, "rng_seed": 3}},
          "attack": {"seeds": {"random_k": 1}, "target": "random_distinct_from_seeds", "p_prox": 1.0}
        }"#,
    )
    .unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = run(&["gen-trace", "--config", "m.json", "--out", name], d, "2");
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert_eq!(
        fs::read(d.join("a.csv")).unwrap(),
        fs::read(d.join("b.csv")).unwrap()
    );
    let out = run(
        &["estimate-rate", "--trace", "a.csv", "--config", "m.json"],
        d,
        "1",
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let (emp, ana) = (
        v["empirical_rate_per_pair_h"].as_f64().unwrap(),
        v["analytic_rate_per_pair_h"].as_f64().unwrap(),
    );
    assert!(emp > 0.0 && (emp / ana - 1.0).abs() < 0.5, "{emp} vs {ana}");
}

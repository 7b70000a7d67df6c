use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gradops(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradops"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn deconflict_projects_a_conflicting_pair() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "g.csv", "1,0\n-1,1\n");
    let out = gradops(&["deconflict", "--input", &input]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(floats(&v["modified"][0]), vec![0.5, 0.5]);
    assert_eq!(v["fallback"], Value::Bool(false));
    // every update dot is non-negative
    assert!(floats(&v["update_dots"]).iter().all(|&d| d >= 0.0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"command\":\"deconflict\""), "{stderr}");
}

#[test]
fn deconflict_leaves_aligned_rows_alone() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "g.csv", "1,2,0\n0.5,1,3\n2,0,1\n");
    let out = gradops(&["deconflict", "--input", &input, "--alpha", "-2"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert_eq!(v["modified"], v["input"]);
    assert_eq!(v["conflicted"], serde_json::json!([false, false, false]));
}

#[test]
fn deconflict_falls_back_on_antipodal_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "g.csv", "1,0\n-1,0\n");
    let out_path = dir.path().join("out.json");
    let out = gradops(&[
        "deconflict",
        "--input",
        &input,
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(out_path).unwrap()).unwrap();
    assert_eq!(v["fallback"], Value::Bool(true));
    assert_eq!(floats(&v["update"]), vec![0.0, 0.0]);
}

#[test]
fn deconflict_rejects_bad_input_with_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "g.csv", "1,0\n2,oops\n");
    let out = gradops(&["deconflict", "--input", &input]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("row 2, column 2"), "{stderr}");

    let ragged = write(dir.path(), "r.csv", "1,0\n2\n");
    assert_eq!(code(&gradops(&["deconflict", "--input", &ragged])), 2);
    assert_eq!(
        code(&gradops(&["deconflict", "--input", "/no/such/file.csv"])),
        2
    );
}

#[test]
fn baselines_run_through_deconflict() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "g.csv", "1,0\n-1,1\n");
    for m in ["gd", "pcgrad", "mgda", "imtl-g"] {
        let out = gradops(&[
            "deconflict",
            "--input",
            &input,
            "--method",
            m,
            "--seed",
            "3",
        ]);
        assert_eq!(code(&out), 0, "{m}");
        assert!(stdout_json(&out)["update"].is_array());
    }
    let gd = stdout_json(&gradops(&[
        "deconflict",
        "--input",
        &input,
        "--method",
        "gd",
    ]));
    assert_eq!(floats(&gd["update"]), vec![0.0, 1.0]);
}

#[test]
fn unknown_flags_and_values_are_usage_errors() {
    assert_eq!(
        code(&gradops(&["deconflict", "--input", "x", "--frobnicate"])),
        2
    );
    assert_eq!(code(&gradops(&["toy2d", "--method", "adam"])), 2);
    assert_eq!(code(&gradops(&["nosuchcommand"])), 2);
}

#[test]
fn help_lists_defaults() {
    for (cmd, needle) in [
        ("deconflict", "[default: gradops]"),
        ("toy2d", "[default: 20000]"),
        ("sweep", "[default: paper1 paper2 paper3]"),
        ("train", "[default: train-out]"),
        ("metrics", "[default: average]"),
    ] {
        let out = gradops(&[cmd, "--help"]);
        assert_eq!(code(&out), 0);
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains(needle), "{cmd}: {text}");
        assert!(text.contains("--seed"), "{cmd}: {text}");
    }
}

#[test]
fn toy2d_converges_from_the_third_init() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let out = gradops(&[
        "toy2d",
        "--method",
        "gradops",
        "--alpha",
        "0",
        "--init",
        "paper3",
        "--steps",
        "20000",
        "--lr",
        "0.001",
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert!(v["residual"].as_f64().unwrap() < 1e-2);
    assert_eq!(v["converged"], Value::Bool(true));
    let text = fs::read_to_string(traj).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("step,theta1,theta2,loss1,loss2,residual")
    );
    assert_eq!(lines.count(), 20_001);
}

#[test]
fn toy2d_flags_plain_descent_stalling() {
    let out = gradops(&["toy2d", "--method", "gd", "--init", "paper1"]);
    assert_eq!(code(&out), 0);
    let v = stdout_json(&out);
    assert!(v["residual"].as_f64().unwrap() >= 1e-2);
    assert_eq!(v["converged"], Value::Bool(false));
}

#[test]
fn toy2d_rejects_zero_steps_and_bad_inits() {
    assert_eq!(code(&gradops(&["toy2d", "--steps", "0"])), 2);
    assert_eq!(code(&gradops(&["toy2d", "--init", "paper9"])), 2);
    assert_eq!(code(&gradops(&["toy2d", "--init", "1,2,3"])), 2);
}

#[test]
fn toy2d_accepts_a_coordinate_init() {
    let out = gradops(&["toy2d", "--init", "-0.5,0.25", "--steps", "3"]);
    assert_eq!(code(&out), 0);
    assert_eq!(floats(&stdout_json(&out)["init"]), vec![-0.5, 0.25]);
}

#[test]
fn toy2d_divergence_writes_the_truncated_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let out = gradops(&[
        "toy2d",
        "--lr",
        "1e308",
        "--steps",
        "100",
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
    let v = stdout_json(&out);
    assert!(v["diverged"].is_string());
    let rows = fs::read_to_string(traj).unwrap().lines().count() - 1;
    assert!((1..=100).contains(&rows), "{rows}");
}

#[test]
fn toy2d_output_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = gradops(&[
            "toy2d",
            "--method",
            "pcgrad",
            "--seed",
            "9",
            "--steps",
            "300",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        (fs::read(p).unwrap(), out.stdout)
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn sweep_writes_one_file_per_cell_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let out = gradops(&[
        "sweep",
        "--alphas",
        "0,-2,-5",
        "--methods",
        "gradops",
        "--steps",
        "20000",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let files = fs::read_dir(&out_dir).unwrap().count();
    assert_eq!(files, 10);
    assert!(out_dir.join("gradops_alpha-5_paper3.csv").exists());
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next(),
        Some("method,alpha,init,theta1,theta2,residual,converged,status")
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), 9);
    for init in ["paper1", "paper2", "paper3"] {
        let mut points: Vec<(String, String)> = rows
            .iter()
            .filter(|r| r[2] == init)
            .map(|r| (r[3].clone(), r[4].clone()))
            .collect();
        points.dedup();
        assert!(points.len() >= 2, "{init}: {points:?}");
    }
}

#[test]
fn sweep_runs_other_methods_once_per_init() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let out = gradops(&[
        "sweep",
        "--alphas",
        "0",
        "-1",
        "--methods",
        "gd,mgda",
        "--inits",
        "paper2",
        "--inits",
        "0.1,-0.4",
        "--steps",
        "50",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.contains("mgda,,\"0.1,-0.4\","), "{summary}");
    assert!(out_dir.join("gd_0.1_-0.4.csv").exists());
}

#[test]
fn sweep_needs_alphas() {
    assert_eq!(code(&gradops(&["sweep"])), 2);
    assert_eq!(code(&gradops(&["sweep", "--alphas", ""])), 2);
    assert_eq!(code(&gradops(&["sweep", "--alphas"])), 2);
}

#[test]
fn sweep_with_some_failing_cells_still_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let out = gradops(&[
        "sweep",
        "--alphas",
        "0",
        "--inits",
        "paper1",
        "--inits",
        "nowhere",
        "--steps",
        "10",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert!(
        summary.contains("gradops,0,nowhere,,,,false,failed"),
        "{summary}"
    );

    let all_bad = gradops(&[
        "sweep",
        "--alphas",
        "0",
        "--inits",
        "nowhere",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&all_bad), 2);
}

#[test]
fn metrics_on_the_census_table() {
    let out = gradops(&[
        "metrics",
        "--table",
        &fixture("census.csv"),
        "--baseline",
        "Single-task",
        "--ties",
        "min",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("method,delta_m,delta_m_percent,mean_rank")
    );
    let field = |name: &str, k: usize| -> f64 {
        text.lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap()
            .split(',')
            .nth(k)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((field("Uniform scaling", 2) - 0.52).abs() < 0.005);
    assert!((field("Uniform scaling", 1) - 0.0052).abs() < 0.00005);
    assert!((field("Single-task", 3) - 4.33).abs() < 0.01);
    assert_eq!(field("Single-task", 1), 0.0);
}

#[test]
fn metrics_names_a_missing_baseline() {
    let out = gradops(&[
        "metrics",
        "--table",
        &fixture("census.csv"),
        "--baseline",
        "Oracle",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Oracle"));
}

const SMALL_RUN: &str =
    "epochs = 3\nbatch_size = 64\nhidden = [8]\nsynth_rows = 600\nsynth_features = 6\n";

#[test]
fn train_writes_report_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_RUN);
    let out_dir = dir.path().join("out");
    let out = gradops(&[
        "train",
        "--config",
        &cfg,
        "--seed",
        "4",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["seed"], 4);
    assert_eq!(report["epochs"].as_array().unwrap().len(), 3);
    let table = fs::read_to_string(out_dir.join("table.csv")).unwrap();
    assert!(table
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("direction,higher"));
    assert!(table
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("gradops(alpha=0),"));
}

#[test]
fn train_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", SMALL_RUN);
    let run = |sub: &str| {
        let d = dir.path().join(sub);
        assert_eq!(
            code(&gradops(&[
                "train",
                "--config",
                &cfg,
                "--out-dir",
                d.to_str().unwrap()
            ])),
            0
        );
        (
            fs::read(d.join("report.json")).unwrap(),
            fs::read(d.join("table.csv")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn train_gd_and_gradops_agree_without_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let final_test_auc = |method: &str| -> Vec<f64> {
        let text = format!("{SMALL_RUN}epochs = 10\nsynth_conflict = 1.0\nmethod = \"{method}\"\n")
            .replacen("epochs = 3\n", "", 1);
        let cfg = write(dir.path(), &format!("{method}.toml"), &text);
        let d = dir.path().join(method);
        assert_eq!(
            code(&gradops(&[
                "train",
                "--config",
                &cfg,
                "--out-dir",
                d.to_str().unwrap()
            ])),
            0
        );
        let r: Value =
            serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
        floats(&r["final_test_auc"])
    };
    let gd = final_test_auc("gd");
    let ours = final_test_auc("gradops");
    for (a, b) in gd.iter().zip(&ours) {
        assert!((a - b).abs() < 0.01, "{gd:?} vs {ours:?}");
    }
}

#[test]
fn train_config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "a.toml", "epochs = 2\nlearning_rate = 0.1\n");
    let out = gradops(&["train", "--config", &unknown]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let bad_method = write(dir.path(), "b.toml", "method = \"sgd\"\n");
    assert_eq!(code(&gradops(&["train", "--config", &bad_method])), 2);
    let missing_col = write(
        dir.path(),
        "c.toml",
        "source = \"csv\"\ncsv_path = \"d.csv\"\nfeature_columns = [\"x\"]\ntask_columns = [\"y\"]\n",
    );
    write(dir.path(), "d.csv", "x,z\n1,0\n2,1\n");
    let out = gradops(&["train", "--config", &missing_col]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`y`"));
}

use std::path::Path;
use std::process::{Command, Output};

fn cellrom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cellrom"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> serde_json::Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let line = stdout.lines().last().expect("summary line");
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["status"], "ok");
    v
}

fn coarse_config(dir: &Path) {
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"plant": {"n_axial": 8, "n_stack": 2}, "dt": 1.0}"#,
    )
    .unwrap();
}

#[test]
fn extract_fit_simulate_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    coarse_config(d);
    let base = ["--config", "cfg.json"];
    let run = |extra: &[&str]| ok(&cellrom(d, &[&base[..], extra].concat()));

    run(&["extract", "--q", "1e6", "--t-end", "2500", "--out", "ex"]);
    let fit = run(&[
        "fit",
        "ex/step_response.csv",
        "--order",
        "4",
        "--seed",
        "3",
        "--out",
        "fit",
    ]);
    assert!(fit["rel_fit_rms"].as_f64().unwrap() < 0.01);

    let sim = [
        "--q", "1e6", "--m-dot", "2e-3", "--t-in-c", "5", "--t-end", "600",
    ];
    run(&[
        &["simulate", "--model", "plant", "--out", "plant"][..],
        &sim,
    ]
    .concat());
    run(&[
        &[
            "simulate",
            "--model",
            "lti",
            "--model-file",
            "fit/model.json",
            "--out",
            "lti",
        ][..],
        &sim,
    ]
    .concat());
    let cmp = run(&[
        "compare",
        "lti/trajectory.csv",
        "plant/trajectory.csv",
        "--out",
        "cmp",
    ]);
    // the model was identified on this exact drive
    assert!(cmp["max_rel_error_pct"].as_f64().unwrap() < 1.0, "{cmp}");
    assert!(d.join("cmp/compare.json").exists());
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    coarse_config(d);
    for out in ["a", "b"] {
        ok(&cellrom(
            d,
            &[
                "--config", "cfg.json", "simulate", "--model", "plant", "--t-end", "300", "--out",
                out,
            ],
        ));
    }
    let a = std::fs::read(d.join("a/trajectory.csv")).unwrap();
    let b = std::fs::read(d.join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn grid_build_and_lpv_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    coarse_config(d);
    let grid = ok(&cellrom(
        d,
        &[
            "--config",
            "cfg.json",
            "grid",
            "build",
            "--axes",
            "heat-only",
            "--t-end",
            "2000",
            "--out",
            "g",
        ],
    ));
    assert_eq!(grid["vertices"], 7);
    let sim = ok(&cellrom(
        d,
        &[
            "--config",
            "cfg.json",
            "simulate",
            "--model",
            "lpv",
            "--model-file",
            "g/grid.json",
            "--t-end",
            "400",
            "--out",
            "s",
        ],
    ));
    assert_eq!(sim["clamp_count"], 0);
}

#[test]
fn study_writes_a_report_directory() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    coarse_config(d);
    let v = ok(&cellrom(
        d,
        &[
            "--config",
            "cfg.json",
            "study",
            "lpv-validation",
            "--t-end",
            "600",
            "--out",
            "study",
        ],
    ));
    assert_eq!(v["flags"]["within_tolerance"], true);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("study/report.json")).unwrap())
            .unwrap();
    for case in report["cases"].as_array().unwrap() {
        let csv = d
            .join("study")
            .join(case["trajectory_csv"].as_str().unwrap());
        let text = std::fs::read_to_string(csv).unwrap();
        assert!(text.starts_with("t_s,T_avg_K,T_max_K,T_out_K"));
    }
    assert!(d.join("study/plot.py").exists());
}

#[test]
fn failures_print_one_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cases: [&[&str]; 3] = [
        &["simulate", "--model", "lti"],
        &["--config", "missing.json", "simulate", "--model", "plant"],
        &["--dt=-1", "simulate", "--model", "plant"],
    ];
    for args in cases {
        let out = cellrom(d, args);
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        let line = stderr.lines().last().unwrap();
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["status"], "error");
        assert!(!v["message"].as_str().unwrap().is_empty());
    }
}

#[test]
fn usage_errors_end_with_a_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = cellrom(dir.path(), &["simulate", "--model", "nonsense"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let v: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(v["status"], "error");
}

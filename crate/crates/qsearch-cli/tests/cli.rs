//! Black-box CLI behavior: exit codes, flag validation, golden rows,
//! format round-trips, seed resolution, and file outputs.

use std::process::{Command, Output};

fn qsearch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsearch"))
        .args(args)
        .env_remove("SEED")
        .output()
        .expect("binary runs")
}

fn stdout_str(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_str(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_str(out)).expect("stdout is one JSON object")
}

#[test]
fn threshold_matches_reference_rows() {
    let out = qsearch(&["threshold", "--c", "0.01", "--pi-hat", "0.5"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert!((v["pi_star"].as_f64().unwrap() - 0.977).abs() <= 0.001);

    let out = qsearch(&["threshold", "--c", "0.01", "--pi-hat", "0.95"]);
    assert!((json(&out)["pi_star"].as_f64().unwrap() - 0.985).abs() <= 0.001);
}

#[test]
fn threshold_rejects_negative_cost_naming_the_flag() {
    let out = qsearch(&["threshold", "--c", "-1", "--pi-hat", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_str(&out);
    assert!(
        err.contains('c'),
        "message must name the offending flag: {err}"
    );
}

#[test]
fn threshold_rejects_out_of_range_prior() {
    for bad in ["0", "1", "1.5", "-0.2"] {
        let out = qsearch(&["threshold", "--c", "0.01", "--pi-hat", bad]);
        assert_eq!(out.status.code(), Some(2), "pi-hat = {bad}");
        assert!(stderr_str(&out).contains("prior"));
    }
}

#[test]
fn table_golden_rows_and_errors() {
    let out = qsearch(&["table", "--id", "1"]);
    assert!(out.status.success());
    let text = stdout_str(&out);
    assert!(text.starts_with("c,pi_star\n"));
    assert_eq!(text.lines().count(), 13);
    assert!(text.contains("\n0.05,0.865\n"), "table 1: {text}");

    let out = qsearch(&["table", "--id", "4"]);
    let text = stdout_str(&out);
    assert!(text.contains("\n0.025,0.041\n"), "table 4: {text}");

    let out = qsearch(&["table", "--id", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn table_csv_round_trips_to_identical_bytes() {
    for id in ["1", "2", "3", "4"] {
        let text = stdout_str(&qsearch(&["table", "--id", id]));
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let mut rebuilt = format!("{header}\n");
        for line in lines {
            let (sweep, ps) = line.split_once(',').unwrap();
            let sweep: f64 = sweep.parse().unwrap();
            let ps: f64 = ps.parse().unwrap();
            rebuilt.push_str(&format!("{},{:.3}\n", sweep, ps));
        }
        assert_eq!(rebuilt, text, "table {id} round trip");
    }
}

#[test]
fn table_json_lists_rows_in_sweep_order() {
    let v = json(&qsearch(&["table", "--id", "3", "--format", "json"]));
    assert_eq!(v["table_id"], 3);
    assert_eq!(v["fixed_param"], "c");
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[0]["pi_hat"].as_f64().unwrap(), 0.025);
    assert!((rows[0]["pi_star"].as_f64().unwrap() - 0.704).abs() < 1e-9);
}

#[test]
fn simulate_requires_eps_for_impulse_and_search() {
    for mode in ["impulse", "coupled", "search"] {
        let out = qsearch(&["simulate", "--mode", mode, "--c", "0.01", "--pi-hat", "0.5"]);
        assert_eq!(out.status.code(), Some(2), "mode {mode}");
        assert!(stderr_str(&out).contains("--eps"));
    }
}

#[test]
fn simulate_coupled_summary_respects_floor_property() {
    let out = qsearch(&[
        "simulate", "--mode", "coupled", "--c", "0.01", "--pi-hat", "0.5", "--eps", "0.02", "--n",
        "100", "--seed", "11",
    ]);
    let v = json(&out);
    assert!(v["sup_reg_diff_max"].as_f64().unwrap() <= 0.02);
    assert_eq!(v["reg_within_eps"], true);
}

#[test]
fn seed_env_var_matches_explicit_flag() {
    let with_flag = qsearch(&[
        "simulate",
        "--mode",
        "reflected",
        "--c",
        "0.01",
        "--pi-hat",
        "0.5",
        "--n",
        "50",
        "--seed",
        "9",
    ]);
    let with_env = Command::new(env!("CARGO_BIN_EXE_qsearch"))
        .args([
            "simulate",
            "--mode",
            "reflected",
            "--c",
            "0.01",
            "--pi-hat",
            "0.5",
            "--n",
            "50",
        ])
        .env("SEED", "9")
        .output()
        .unwrap();
    assert_eq!(with_flag.stdout, with_env.stdout);
    // A flag beats the environment.
    let flag_beats_env = Command::new(env!("CARGO_BIN_EXE_qsearch"))
        .args([
            "simulate",
            "--mode",
            "reflected",
            "--c",
            "0.01",
            "--pi-hat",
            "0.5",
            "--n",
            "50",
            "--seed",
            "9",
        ])
        .env("SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(flag_beats_env.stdout, with_flag.stdout);

    let bad_env = Command::new(env!("CARGO_BIN_EXE_qsearch"))
        .args([
            "simulate",
            "--mode",
            "reflected",
            "--c",
            "0.01",
            "--pi-hat",
            "0.5",
            "--n",
            "50",
        ])
        .env("SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
}

#[test]
fn simulate_writes_path_dump() {
    let dir = std::env::temp_dir().join(format!("qsearch-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("impulse.csv");
    let out = qsearch(&[
        "simulate",
        "--mode",
        "impulse",
        "--c",
        "0.01",
        "--pi-hat",
        "0.5",
        "--eps",
        "0.05",
        "--n",
        "10",
        "--dt",
        "0.01",
        "--horizon",
        "0.5",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,value,regulator,event_flag"));
    assert_eq!(text.lines().count(), 51 + 1); // steps + initial point + header
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_search_writes_trial_log() {
    let dir = std::env::temp_dir().join(format!("qsearch-test-log-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trials.csv");
    let out = qsearch(&[
        "simulate",
        "--mode",
        "search",
        "--c",
        "0.1",
        "--pi-hat",
        "0.5",
        "--eps",
        "0.05",
        "--n",
        "200",
        "--dt",
        "0.01",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_str(&out));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("trial,tau,switches,chosen_theta,cost,truncated")
    );
    assert_eq!(text.lines().count(), 201);
    // Log costs must average to the summary mean.
    let v = json(&out);
    let mean_from_log: f64 = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse::<f64>().unwrap())
        .sum::<f64>()
        / 200.0;
    assert!((mean_from_log - v["mean_cost"].as_f64().unwrap()).abs() < 1e-4);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn plan_emits_feasibility_verdicts() {
    let v = json(&qsearch(&[
        "plan",
        "--c",
        "0.1",
        "--pi-hat",
        "0.5",
        "--eps-target",
        "0.5",
    ]));
    assert_eq!(v["feasible"], true);
    let eps2 = v["eps2"].as_f64().unwrap();
    assert!(eps2 > 0.0 && eps2 < 1e-60);
    assert!(
        (v["t_bound"].as_f64().unwrap() - 8.0 * v["expected_tau"].as_f64().unwrap()).abs() < 1e-3
    );

    let out = qsearch(&[
        "plan",
        "--c",
        "0.03",
        "--pi-hat",
        "0.5",
        "--eps-target",
        "0.001",
    ]);
    assert!(
        out.status.success(),
        "infeasible plan is still a clean exit"
    );
    let v = json(&out);
    assert_eq!(v["feasible"], false);
    assert!(v["eps2"].is_null());

    let out = qsearch(&[
        "plan",
        "--c",
        "0.1",
        "--pi-hat",
        "0.5",
        "--eps-target",
        "2.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn risk_reports_gap_to_analytic_value() {
    let v = json(&qsearch(&[
        "risk", "--c", "0.1", "--pi-hat", "0.5", "--n", "2000", "--dt", "0.001", "--seed", "1",
    ]));
    assert!((v["analytic_value"].as_f64().unwrap() - 0.359797).abs() < 1e-4);
    assert!(v["rel_gap"].as_f64().unwrap().abs() < 0.05);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = qsearch(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mode_inconsistent_flags_are_usage_errors() {
    let out = qsearch(&[
        "simulate", "--mode", "plain", "--c", "0.01", "--pi-hat", "0.5", "--eps", "0.05",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("--eps"));

    let out = qsearch(&[
        "simulate",
        "--mode",
        "reflected",
        "--c",
        "0.01",
        "--pi-hat",
        "0.5",
        "--max-time",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("--max-time"));

    let out = qsearch(&[
        "simulate",
        "--mode",
        "search",
        "--c",
        "0.1",
        "--pi-hat",
        "0.5",
        "--eps",
        "0.05",
        "--horizon",
        "2.0",
        "--n",
        "200",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_str(&out).contains("--horizon"));
}

#[test]
fn solver_failure_is_runtime_exit() {
    // A positive but absurdly small cost pushes the root beyond the
    // representable bracket: convergence failure, not a usage error.
    let out = qsearch(&["threshold", "--c", "1e-300", "--pi-hat", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_str(&out).contains("bracket"));
}

#[test]
fn unwritable_output_path_is_runtime_exit() {
    let out = qsearch(&[
        "simulate",
        "--mode",
        "reflected",
        "--c",
        "0.01",
        "--pi-hat",
        "0.5",
        "--n",
        "10",
        "--dt",
        "0.01",
        "--horizon",
        "0.1",
        "--out",
        "/nonexistent-dir/paths.csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

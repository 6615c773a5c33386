//! End-to-end tests of the `blockplan` binary. Deterministic commands are
//! pinned to golden stdout files; error paths assert exit codes and
//! messages. Nothing here touches the network — the remote-planner test
//! checks only that missing environment configuration is rejected.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_blockplan");

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("BLOCKPLAN_ENDPOINT")
        .env_remove("BLOCKPLAN_MODEL")
        .env_remove("BLOCKPLAN_API_KEY")
        .output()
        .expect("the binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is utf-8")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr is utf-8")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exits normally")
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("blockplan-golden-{}-{name}", std::process::id()))
}

#[test]
fn execute_builds_the_bundled_column_example() {
    let out = run(&[
        "execute",
        "--plan",
        &fixture("tower_plan.json"),
        "--grid",
        &fixture("empty_9x5x9.json"),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), include_str!("fixtures/golden_execute_tower.txt"));
}

#[test]
fn execute_rejects_vertical_coordinates_with_the_json_path() {
    let out = run(&[
        "execute",
        "--plan",
        &fixture("malformed_plan.json"),
        "--grid",
        &fixture("empty_9x5x9.json"),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("actions[0].at.y"), "stderr: {}", stderr(&out));
}

#[test]
fn execute_overflow_names_the_failing_action() {
    let out = run(&[
        "execute",
        "--plan",
        &fixture("overflow_plan.json"),
        "--grid",
        &fixture("empty_9x5x9.json"),
    ]);
    assert_eq!(code(&out), 3);
    let err = stderr(&out);
    assert!(err.contains("action 0 (stack)"), "stderr: {err}");
    assert!(err.contains("column (3, 3)"), "stderr: {err}");
}

#[test]
fn execute_trace_records_rule_firings() {
    let out = run(&[
        "execute",
        "--plan",
        &fixture("extend_east_plan.json"),
        "--grid",
        &fixture("blue_row_grid.json"),
        "--trace",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_execute_trace.txt"));
}

#[test]
fn analyze_reports_the_tee() {
    let out = run(&["analyze", "--grid", &fixture("tshape_grid.json")]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_analyze_tshape.txt"));
}

#[test]
fn analyze_empty_grid() {
    let out = run(&["analyze", "--grid", &fixture("empty_9x5x9.json")]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_analyze_empty.txt"));
}

#[test]
fn verify_is_identity_on_clean_plans() {
    let out = run(&[
        "verify",
        "--plan",
        &fixture("clean_plan.json"),
        "--grid",
        &fixture("empty_9x5x9.json"),
        "--instruction",
        "Place a red block at (2, 3).",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_verify_clean.txt"));
}

#[test]
fn verify_flips_reversed_extends() {
    let out = run(&[
        "verify",
        "--plan",
        &fixture("reversed_extend_plan.json"),
        "--grid",
        &fixture("blue_row_grid.json"),
        "--instruction",
        "Extend the blue row east by two blocks.",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_verify_reversed.txt"));
}

#[test]
fn verify_signals_replan_with_exit_one() {
    let out = run(&[
        "verify",
        "--plan",
        &fixture("critical_plan.json"),
        "--grid",
        &fixture("empty_9x5x9.json"),
        "--instruction",
        "Add a row of red blocks going east from (2, 2).",
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_verify_critical.txt"));
}

#[test]
fn clarify_asks_for_missing_counts() {
    let out = run(&[
        "clarify",
        "--instruction",
        "Add a stack of blue blocks next to the red stack.",
        "--grid",
        &fixture("red_stack_grid.json"),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_clarify_ask.txt"));
}

#[test]
fn clarify_prints_null_when_fully_specified() {
    let out = run(&[
        "clarify",
        "--instruction",
        "Place a red block at (2, 3).",
        "--grid",
        &fixture("empty_9x5x9.json"),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "null\n");
}

#[test]
fn clarify_guesses_without_question_budget() {
    let out = run(&[
        "clarify",
        "--instruction",
        "Add a stack of blue blocks next to the red stack.",
        "--grid",
        &fixture("red_stack_grid.json"),
        "--no-question",
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), include_str!("fixtures/golden_clarify_guess.txt"));
}

const ORACLE_RUN: &[&str] = &[
    "run",
    "--repeats",
    "2",
    "--seeds",
    "7,8",
    "--generic-error-rate",
    "0",
    "--specific-error-rate",
    "0",
];

#[test]
fn run_oracle_summary_table() {
    let out = run(ORACLE_RUN);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), include_str!("fixtures/golden_run_table.txt"));
}

#[test]
fn run_report_is_bit_identical_across_invocations() {
    let path_a = temp_path("report-a.json");
    let path_b = temp_path("report-b.json");
    for path in [&path_a, &path_b] {
        let mut args: Vec<&str> = ORACLE_RUN.to_vec();
        let path = path.to_string_lossy().into_owned();
        args.extend(["--report", &path]);
        let out = run(&args);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let a = std::fs::read(&path_a).expect("report A written");
    let b = std::fs::read(&path_b).expect("report B written");
    assert_eq!(a, b);

    let report: serde_json::Value = serde_json::from_slice(&a).expect("report parses");
    assert_eq!(report["stats"]["accuracy"]["mean"], 1.0);
    assert_eq!(report["stats"]["score"]["mean"], 180.0);
    assert_eq!(report["rounds"].as_array().map(Vec::len), Some(2));
    std::fs::remove_file(&path_a).ok();
    std::fs::remove_file(&path_b).ok();
}

#[test]
fn run_parallel_matches_sequential_output() {
    let sequential = run(ORACLE_RUN);
    let mut args: Vec<&str> = ORACLE_RUN.to_vec();
    args.push("--parallel");
    let parallel = run(&args);
    assert_eq!(code(&parallel), 0);
    assert_eq!(stdout(&sequential), stdout(&parallel));
}

#[test]
fn run_ablation_table() {
    let out = run(&[
        "run",
        "--ablation",
        "--repeats",
        "1",
        "--seeds",
        "3",
        "--generic-error-rate",
        "0",
        "--specific-error-rate",
        "0",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), include_str!("fixtures/golden_ablation_table.txt"));
}

#[test]
fn run_check_manifest_gates_the_exit_code() {
    let mut pass: Vec<&str> = ORACLE_RUN.to_vec();
    let pass_manifest = fixture("check_pass.json");
    pass.extend(["--check", &pass_manifest]);
    assert_eq!(code(&run(&pass)), 0);

    let mut fail: Vec<&str> = ORACLE_RUN.to_vec();
    let fail_manifest = fixture("check_fail.json");
    fail.extend(["--check", &fail_manifest]);
    let out = run(&fail);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("check failed: score"), "stderr: {}", stderr(&out));
}

#[test]
fn run_report_feeds_stats() {
    let path_a = temp_path("faulty-a.json");
    let path_b = temp_path("faulty-b.json");
    for (path, fault_seed, seeds) in [(&path_a, "11", "1,2,3"), (&path_b, "99", "4,5,6")] {
        let path = path.to_string_lossy().into_owned();
        let out = run(&[
            "run",
            "--planner",
            "faulty",
            "--fault-seed",
            fault_seed,
            "--repeats",
            "3",
            "--seeds",
            seeds,
            "--report",
            &path,
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    }
    let out = run(&[
        "stats",
        &path_a.to_string_lossy(),
        &path_b.to_string_lossy(),
        "--metric",
        "score",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("stats JSON");
    assert_eq!(parsed["metric"], "score");
    assert!(parsed["welch"]["t"].as_f64().expect("t present").is_finite());
    std::fs::remove_file(&path_a).ok();
    std::fs::remove_file(&path_b).ok();
}

#[test]
fn stats_compares_the_fixture_reports() {
    let out = run(&["stats", &fixture("report_a.json"), &fixture("report_b.json")]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("stats JSON");
    assert_eq!(parsed["metric"], "accuracy");
    let t = parsed["welch"]["t"].as_f64().expect("t");
    let df = parsed["welch"]["df"].as_f64().expect("df");
    assert!((14.1..=14.7).contains(&t), "t = {t}");
    assert!((13.3..=13.7).contains(&df), "df = {df}");
}

#[test]
fn stats_rejects_single_run_reports() {
    let out = run(&["stats", &fixture("report_a.json"), &fixture("report_single.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("σ is unavailable"), "stderr: {}", stderr(&out));
}

#[test]
fn run_missing_scenario_file_is_an_input_error() {
    let out = run(&["run", "--scenario", "no-such-scenario.json"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn run_validates_seed_count() {
    let out = run(&["run", "--repeats", "2", "--seeds", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("1 seeds supplied for 2 repeats"));
}

#[test]
fn run_rejects_duplicate_rule_ids() {
    let out = run(&["run", "--rules", &fixture("rules_duplicate.json")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("duplicate rule id \"twice\""), "stderr: {}", stderr(&out));
}

#[test]
fn run_accepts_a_custom_rule_file() {
    let mut args: Vec<&str> = ORACLE_RUN.to_vec();
    let rules = fixture("rules_custom.json");
    args.extend(["--rules", &rules]);
    let out = run(&args);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert_eq!(stdout(&out), include_str!("fixtures/golden_run_table.txt"));
}

#[test]
fn remote_planner_requires_environment_configuration() {
    let out = run(&["run", "--planner", "remote"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("BLOCKPLAN_ENDPOINT"), "stderr: {}", stderr(&out));
}

#[test]
fn conflicting_flags_are_input_errors() {
    let profile = fixture("check_pass.json");
    let out = run(&["run", "--profile", &profile]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--profile applies to the faulty planner"));

    let out = run(&["run", "--ablation", "--no-verifier"]);
    assert_eq!(code(&out), 2);

    let out = run(&["run", "--ablation", "--planner", "remote"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_two() {
    let out = run(&["execute"]);
    assert_eq!(code(&out), 2);
}

//! Runs the built binary end to end in temporary directories.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridbench"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_writes_one_file_per_level_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("predict");
    let o = run(&["generate", "--task", "predict", "--levels", "all", "--seeds", "0..9", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files: Vec<_> = std::fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 17);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["counts"].as_object().unwrap().len(), 16);
    assert!(manifest["counts"].as_object().unwrap().values().all(|n| n == 10));
}

#[test]
fn generate_plan_and_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan");
    let o = run(&["generate", "--task", "plan", "--size", "ultra", "--dists", "180", "--seeds", "0..4", "--out", p(&plan)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(plan.join("plan_CustomBabyAI-GoToRedBall-Ultra-180Dists-v0.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);

    let dec = dir.path().join("dec");
    let o = run(&["generate", "--task", "decompose", "--levels", "BossLevel", "--seeds", "0..29", "--out", p(&dec)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("help_count histogram:"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--task", "predict", "--levels", "NoSuchLevel", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    let o = run(&["generate", "--task", "plan", "--size", "small", "--dists", "99", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--dataset", p(&dir.path().join("nope.jsonl")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_prints_the_stack_evolution() {
    let o = run(&["solve", "UnblockPickup", "6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("BabyAI-UnblockPickup-v0, seed 6\n"));
    assert!(text.contains("Initial stack: [(DropSubgoal), (PickupSubgoal), (GoNextToSubgoal:"));
    assert!(text.contains("Stack at step"));
    assert!(text.contains("Final stack after the success of the mission: [(DropSubgoal)]"));

    // Without insertions the default stack cannot open the closed door.
    let o = run(&["solve", "UnblockPickup", "6", "--no-additions"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("Subgoals added: 0"));
}

#[test]
fn solve_runs_a_given_stack() {
    let o = run(&["solve", "GoToObj", "0", "--json"]);
    let trace: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let executed = trace["executed"].as_array().unwrap();
    let pos = &executed[0]["go_next_to"]["pos"];
    let (Some(x), Some(y)) = (pos[0].as_i64(), pos[1].as_i64()) else {
        panic!("unexpected trace shape: {}", executed[0]);
    };
    let stack = format!("(GoNextToSubgoal, ({x}, {y}))");
    let o = run(&["solve", "GoToObj", "0", "--init-stack", &stack, "--no-additions"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let o = run(&["solve", "GoToObj", "0", "--init-stack", "(FlySubgoal)"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_oracle_silent_few_shot_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run(&["generate", "--task", "decompose", "--levels", "GoTo,UnblockPickup", "--seeds", "0..4", "--out", p(&data)]);
    assert!(o.status.success());

    let res = dir.path().join("oracle");
    let o = run(&["eval", "--dataset", p(&data), "--model", "oracle", "--out", p(&res)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall"]["success_rate"], 1.0);
    assert_eq!(report["overall"]["aci"], 1.0);
    for f in ["records.jsonl", "summary.txt", "summary.csv", "audit.jsonl", "progress.jsonl"] {
        assert!(res.join(f).exists(), "{f}");
    }

    let o = run(&["eval", "--dataset", p(&data), "--model", "oracle", "--out", p(&res), "--resume"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("10 already done, 0 to run"));
    let audit = std::fs::read_to_string(res.join("audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 10);

    let res = dir.path().join("silent");
    let o = run(&[
        "eval", "--dataset", p(&data), "--model", "silent", "--strategy", "few_shot", "--out", p(&res), "--save-prompts",
    ]);
    assert!(o.status.success());
    let prompts = std::fs::read_to_string(res.join("prompts.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(prompts.lines().next().unwrap()).unwrap();
    let prompt = first["prompt"].as_str().unwrap();
    assert!(prompt.contains("### Example 3"));
    assert!(!prompt.contains("### Example 4"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(res.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall"]["successes"], 0);
    assert_eq!(report["overall"]["parse_failures"], 10);

    let o = run(&["summary", p(&dir.path().join("oracle")), p(&res)]);
    assert!(stdout(&o).contains("oracle (zero_shot)"));
    assert!(stdout(&o).contains("silent (few_shot)"));
}

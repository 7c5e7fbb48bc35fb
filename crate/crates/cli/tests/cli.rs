use std::path::Path;
use std::process::{Command, Output};

fn sclm(out: &Path, args: &[&str]) -> Output {
    let output = Command::new(env!("CARGO_BIN_EXE_sclm"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "sclm {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn small_data(dir: &Path) -> String {
    sclm(dir, &["gen-data", "--dataset", "2", "--n-arms", "30", "--budget", "3", "--instances", "1"]);
    dir.join("dataset2/instance0.json").display().to_string()
}

#[test]
fn gen_data_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_data(a.path());
    small_data(b.path());
    let manifest: serde_json::Value = serde_json::from_str(&read(a.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["instances"].as_array().unwrap().len(), 1);
    assert_eq!(read(a.path().join("dataset2/instance0.json")), read(b.path().join("dataset2/instance0.json")));

    let inst: serde_json::Value = serde_json::from_str(&read(a.path().join("dataset2/instance0.json"))).unwrap();
    assert_eq!(inst["N"], 30);
    assert_eq!(inst["K"], 3);
}

#[test]
fn propose_then_adjudicate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = small_data(dir.path());
    let out = dir.path();
    sclm(out, &["--offline", "propose", "--instance", &inst, "--prompt", "A:low+C:high", "--rounds", "2", "--proposals", "3"]);
    let pool = read(out.join("pool.jsonl"));
    assert_eq!(pool.lines().count(), 6);

    let pool_path = out.join("pool.jsonl").display().to_string();
    let result = sclm(
        out,
        &[
            "--offline", "adjudicate", "--instance", &inst, "--pool", &pool_path, "--prompt", "A:low+C:high",
            "--welfare", "egalitarian", "--proxy", "A:low=state*agent_feats[0]",
            "--proxy", "C:high=state*agent_feats[14]",
        ],
    );
    assert!(String::from_utf8_lossy(&result.stdout).contains("chose #"));
    let selection: serde_json::Value = serde_json::from_str(&read(out.join("selection.json"))).unwrap();
    assert!(selection["chosen"].as_u64().unwrap() < 6);
    let scores = read(out.join("scores.csv"));
    assert_eq!(scores.lines().count(), 7, "{scores}");

    let bad = Command::new(env!("CARGO_BIN_EXE_sclm"))
        .args(["--offline", "--out-dir"])
        .arg(out)
        .args(["propose", "--instance", &inst, "--prompt", "A:low", "--backend", "llm"])
        .output()
        .unwrap();
    assert!(!bad.status.success());
}

#[test]
fn whittle_simulate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = small_data(dir.path());
    let out = dir.path();
    sclm(out, &["whittle", "--instance", &inst]);
    let set: serde_json::Value = serde_json::from_str(&read(out.join("whittle.json"))).unwrap();
    assert_eq!(set["indices"].as_array().unwrap().len(), 30);

    sclm(out, &["simulate", "--instance", &inst, "--reward", "state + state*agent_feats[2]", "--seeds", "3"]);
    assert!(read(out.join("utility.csv")).lines().count() > 1);

    sclm(out, &["evaluate", "--instance", &inst, "--reward", "state", "--prompt", "B:high"]);
    let eval: serde_json::Value = serde_json::from_str(&read(out.join("evaluation.json"))).unwrap();
    // the default reward is the baseline itself
    assert_eq!(eval["utility_change"], 0.0);
}

#[test]
fn run_matrix_and_report_refold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 3,
            "dataset": {"n_arms": 30, "budget": 3, "n_instances": 1, "datasets": [1]},
            "generator": {"rounds": 2, "proposals_per_round": 2},
            "adjudicator": {"scoring_seeds": 2},
            "eval": {"methods": ["DLM", "LLM-Zeroshot", "SCLM-SIM-util", "SCLM-SIM-egal"], "eval_seeds": 2,
                     "prompts": "singular"}}"#,
    )
    .unwrap();
    let cfg = cfg.display().to_string();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    sclm(&a, &["--config", &cfg, "run-matrix"]);
    sclm(&b, &["--config", &cfg, "--sequential", "run-matrix"]);
    for name in ["records.jsonl", "report.json", "report.csv", "pareto.csv"] {
        assert_eq!(read(a.join(name)), read(b.join(name)), "{name}");
    }
    // 6 singular prompts x 4 methods
    assert_eq!(read(a.join("records.jsonl")).lines().count(), 24);

    let report = read(a.join("report.json"));
    let csv = read(a.join("report.csv"));
    sclm(&a, &["report"]);
    assert_eq!(read(a.join("report.json")), report);
    assert_eq!(read(a.join("report.csv")), csv);
}

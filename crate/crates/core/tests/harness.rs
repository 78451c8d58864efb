use std::fs;
use std::path::Path;

use ccm_core::harness::{
    compare, run_eval, run_train, verify_report, EvalNoise, EvalRequest, ExperimentConfig, HarnessError, MetricsReport,
};

fn config(dir: &Path, agent: &str, budget: usize) -> ExperimentConfig {
    let text = format!(
        "scenario = \"env1\"\nagent = \"{agent}\"\nseeds = [0, 1]\nbudget = {budget}\neval_episodes = 2\noutput = {:?}\n",
        dir.to_str().unwrap()
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

#[test]
fn train_writes_a_verifiable_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_train(&config(tmp.path(), "ccm", 600)).unwrap();
    for f in ["config.toml", "report.json", "report.csv", "curves.csv", "cuts.csv", "seed-0/log.csv", "seed-1/model.json", "seed-1/eval.csv"] {
        assert!(tmp.path().join(f).is_file(), "{f}");
    }
    assert_eq!(out.report.runs.len(), 2);
    assert_eq!(out.report.eval_runs.len(), 2);
    assert_eq!(out.report.runs[0].steps, 600);
    assert_eq!(MetricsReport::load(tmp.path()).unwrap(), out.report);
    verify_report(tmp.path()).unwrap();
}

#[test]
fn tampered_reports_fail_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_train(&config(tmp.path(), "flat", 400)).unwrap();
    let mut report = out.report.clone();
    report.runs[1].final_reward += 0.5;
    report.write(tmp.path()).unwrap();
    match verify_report(tmp.path()) {
        Err(HarnessError::Verify(problems)) => assert!(problems.iter().any(|p| p.contains("final_reward")), "{problems:?}"),
        other => panic!("expected a verification failure, got {other:?}"),
    }
}

#[test]
fn same_config_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_train(&config(a.path(), "ccm", 500)).unwrap();
    run_train(&config(b.path(), "ccm", 500)).unwrap();
    for f in ["seed-0/log.csv", "seed-1/log.csv", "seed-0/model.json", "seed-1/eval.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_budget_gives_an_empty_valid_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_train(&config(tmp.path(), "ccm", 0)).unwrap();
    assert!(out.report.runs.iter().all(|r| r.episodes == 0 && r.steps == 0));
    verify_report(tmp.path()).unwrap();
}

#[test]
fn cohort_eval_groups_individuals() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "scenario = \"glucose\"\nagent = \"flat\"\nseeds = [3]\nbudget = 200\noutput = {:?}\n",
        tmp.path().join("train").to_str().unwrap()
    );
    run_train(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    let req = EvalRequest {
        checkpoint: tmp.path().join("train/seed-3/model.json"),
        scenario: "glucose".into(),
        episodes: 1,
        noise: EvalNoise::RandomLarge,
        cohort: Some(6),
        seed: 9,
        output: tmp.path().join("eval"),
    };
    let report = run_eval(&req).unwrap();
    assert_eq!(report.runs.len(), 6);
    assert_eq!(report.groups.keys().collect::<Vec<_>>(), ["adolescent", "adult", "child"]);
    assert!(report.groups.values().all(|s| s.n == 2));
    assert!(tmp.path().join("eval/logs/adult-001.csv").is_file());
    verify_report(&req.output).unwrap();
}

#[test]
fn checkpoint_for_another_structure_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    run_train(&config(tmp.path(), "flat", 100)).unwrap();
    let req = EvalRequest {
        checkpoint: tmp.path().join("seed-0/model.json"),
        scenario: "env3".into(),
        episodes: 1,
        noise: EvalNoise::None,
        cohort: None,
        seed: 0,
        output: tmp.path().join("eval"),
    };
    let err = run_eval(&req).unwrap_err();
    assert!(matches!(err, HarnessError::IncompatibleCheckpoint(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
    let cohort = EvalRequest { scenario: "env1".into(), cohort: Some(3), ..req };
    assert_eq!(run_eval(&cohort).unwrap_err().exit_code(), 1);
}

#[test]
fn compare_pairs_runs_by_label() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_train(&config(a.path(), "flat", 300)).unwrap().report;
    let rb = run_train(&config(b.path(), "ccm", 300)).unwrap().report;
    let cmp = compare(&ra, &rb).unwrap();
    let row = cmp.rows.iter().find(|r| r.metric == "final_reward").unwrap();
    assert_eq!(row.wins + row.losses + row.ties, 2);
    assert!((row.delta - (row.mean_b - row.mean_a)).abs() < 1e-12);
    assert_eq!(cmp.rows.len(), 5);
    let mut other = rb.clone();
    other.scenario = "env2".into();
    assert!(matches!(compare(&ra, &other), Err(HarnessError::Mismatch(_))));
}

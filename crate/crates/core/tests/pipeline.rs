mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use communitypoll_core::config::RunConfig;
use communitypoll_core::pipeline::{Pipeline, PipelineError, Stage, StageRun};

fn taylor_config(out: &Path) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/taylor_mock.toml");
    let mut cfg = RunConfig::parse(&fs::read_to_string(&path).unwrap(), &path).unwrap();
    cfg.paths.cache_dir = common::fixture_dir().join("census");
    cfg.paths.out_dir = out.to_path_buf();
    cfg
}

fn bundle(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn poll_before_synthesize_names_missing_population() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(taylor_config(dir.path()), false).unwrap();
    let err = p.run_stage(Stage::Poll).unwrap_err();
    assert!(err.to_string().contains("population artifact missing"), "{err}");
    assert_eq!(err.exit_code(), 3);
    p.run_stage(Stage::Ingest).unwrap();
    p.run_stage(Stage::Context).unwrap();
    let err = p.run_stage(Stage::Poll).unwrap_err();
    assert!(err.to_string().contains("population artifact missing"), "{err}");
}

#[test]
fn full_mock_run_and_idempotence() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(taylor_config(dir.path()), false).unwrap();
    let ran = p.run_all().unwrap();
    assert!(ran.iter().all(|(_, r)| *r == StageRun::Ran));
    let summary = fs::read_to_string(dir.path().join("report/summary.txt")).unwrap();
    assert!(summary.contains("Neutral: 54.2%"), "{summary}");
    assert!(summary.contains("Net support: +41.4 points"), "{summary}");
    assert!(summary.contains("Agents: 1000 polled, 1000 parsed, 0 excluded"), "{summary}");
    assert!(summary.contains("Topics ("), "{summary}");
    let charts: Vec<_> = fs::read_dir(dir.path().join("report/charts")).unwrap().collect();
    assert_eq!(charts.len(), 14);
    let csv = fs::read_to_string(dir.path().join("report/aggregates.csv")).unwrap();
    let questions: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| &l[..3]).collect();
    assert_eq!(questions.len(), 13);

    let before = p.manifest().clone();
    assert_eq!(p.run_stage(Stage::Analyze).unwrap(), StageRun::UpToDate);
    assert_eq!(p.manifest(), &before);
    drop(p);

    let mut again = Pipeline::open(taylor_config(dir.path()), false).unwrap();
    assert_eq!(again.run_stage(Stage::Analyze).unwrap(), StageRun::UpToDate);
    assert_eq!(again.manifest().stages, before.stages);
    drop(again);

    let mut forced = Pipeline::open(taylor_config(dir.path()), true).unwrap();
    assert_eq!(forced.run_stage(Stage::Analyze).unwrap(), StageRun::Ran);
    assert!(!forced.manifest().stages.contains_key(&Stage::Report));
    assert!(forced.manifest().stages.contains_key(&Stage::Poll));
}

#[test]
fn identical_runs_give_identical_bundles() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        Pipeline::open(taylor_config(d.path()), false).unwrap().run_all().unwrap();
    }
    let (ba, bb) = (bundle(&a.path().join("report")), bundle(&b.path().join("report")));
    assert!(!ba.is_empty());
    assert_eq!(ba, bb);
    assert_eq!(fs::read(a.path().join("population.jsonl")).unwrap(), fs::read(b.path().join("population.jsonl")).unwrap());
}

#[test]
fn skipped_topics_and_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs.csv");
    let mut text = String::from("community_id,question_id,option_id,y_hat,y\n");
    for i in 0..40 {
        text.push_str(&format!("c{i},q12,Neutral,0.5,{:.3}\n", 0.5 + (i as f64 - 20.0) / 400.0));
    }
    fs::write(&pairs, text).unwrap();
    let mut cfg = taylor_config(&dir.path().join("run"));
    cfg.ldta.enabled = false;
    cfg.calibration.pairs = Some(pairs);
    let mut p = Pipeline::open(cfg, false).unwrap();
    let stages: Vec<Stage> = p.run_all().unwrap().into_iter().map(|(s, _)| s).collect();
    assert!(stages.contains(&Stage::Calibrate));
    let summary = fs::read_to_string(dir.path().join("run/report/summary.txt")).unwrap();
    assert!(summary.contains("topic analysis skipped"), "{summary}");
    assert!(summary.contains("Conformal intervals for q12"), "{summary}");
    let intervals = fs::read_to_string(dir.path().join("run/report/intervals.csv")).unwrap();
    let options: usize =
        communitypoll_core::survey::Questionnaire::standard().questions.iter().map(|q| q.options.len()).sum();
    assert_eq!(intervals.lines().count(), 1 + options);
    assert!(intervals.starts_with("question_id,option,y_hat,lo,hi\n"));
}

#[test]
fn lock_excludes_concurrent_commands() {
    let dir = tempfile::tempdir().unwrap();
    let first = Pipeline::open(taylor_config(dir.path()), false).unwrap();
    let err = Pipeline::open(taylor_config(dir.path()), false).err().unwrap();
    assert!(matches!(err, PipelineError::Locked(_)));
    drop(first);
    assert!(Pipeline::open(taylor_config(dir.path()), false).is_ok());
}

#[test]
fn config_change_invalidates_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(taylor_config(dir.path()), false).unwrap();
    p.run_stage(Stage::Ingest).unwrap();
    assert!(p.is_done(Stage::Ingest));
    drop(p);
    let mut cfg = taylor_config(dir.path());
    cfg.seed = 43;
    let mut p = Pipeline::open(cfg, false).unwrap();
    assert!(!p.is_done(Stage::Ingest));
    assert_eq!(p.run_stage(Stage::Ingest).unwrap(), StageRun::Ran);
}

#[test]
fn provider_failure_maps_to_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = taylor_config(dir.path());
    cfg.agent_count = 100;
    cfg.provider.mock.population_size = None;
    cfg.provider.mock.faults.fail_submits = true;
    cfg.poll.exec.max_submit_retries = 1;
    cfg.poll.exec.backoff_base_ms = 1;
    let mut p = Pipeline::open(cfg, false).unwrap();
    for s in [Stage::Ingest, Stage::Synthesize, Stage::Context] {
        p.run_stage(s).unwrap();
    }
    let err = p.run_stage(Stage::Poll).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
    assert!(dir.path().join("poll/responses.incomplete.jsonl").exists());
    assert!(!p.is_done(Stage::Poll));
}

mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::OnceLock;
use std::time::Duration;

use communitypoll_core::poll::{
    execute_batch, parse_response, read_raw_results, reprocess_run, run_poll, BehaviorProfile, ExecConfig, Faults,
    MockProvider, OpenAiCompatible, PollError, PollRunConfig, ProviderError, ProviderRequest, ResultStatus, Sampling,
    RAW_RESULTS_FILE, REQUESTS_FILE, RESPONSES_FILE, RESPONSES_INCOMPLETE_FILE,
};
use communitypoll_core::survey::Questionnaire;
use communitypoll_core::synth::{agent_id, synthesize, AgentProfile, SynthesisConfig};

fn agents() -> &'static [AgentProfile] {
    static AGENTS: OnceLock<Vec<AgentProfile>> = OnceLock::new();
    AGENTS.get_or_init(|| synthesize(&common::taylor_marginals(), &SynthesisConfig::default()).unwrap().agents)
}

fn fast() -> PollRunConfig {
    PollRunConfig {
        exec: ExecConfig { backoff_base_ms: 1, backoff_max_ms: 5, poll_interval_ms: 1, ..ExecConfig::default() },
        ..PollRunConfig::default()
    }
}

fn mock(seed: u64, profile: BehaviorProfile) -> MockProvider {
    MockProvider::new(seed, profile, &Questionnaire::standard()).unwrap()
}

fn weights(q: &str, w: &[(&str, f64)]) -> BTreeMap<String, BTreeMap<String, f64>> {
    BTreeMap::from([(q.to_string(), w.iter().map(|(k, v)| (k.to_string(), *v)).collect())])
}

#[test]
fn thousand_agents_all_parse() {
    let dir = tempfile::tempdir().unwrap();
    let q = Questionnaire::standard();
    let out = run_poll(agents(), &common::taylor_context(), &q, &mock(42, BehaviorProfile::default()), &fast(), dir.path())
        .unwrap();
    assert_eq!((out.n_ok, out.n_failed), (1000, 0));
    assert!(out.responses.iter().all(|r| r.retry_count == 0 && r.answers.len() == 13));
    for f in [REQUESTS_FILE, RAW_RESULTS_FILE, RESPONSES_FILE] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(read_raw_results(&dir.path().join(RAW_RESULTS_FILE)).unwrap().len(), 1000);
    assert_eq!(reprocess_run(dir.path(), &q).unwrap(), out.responses);
    let ids: Vec<&str> = out.responses.iter().map(|r| r.agent_id.as_str()).collect();
    let expected: Vec<String> = agents().iter().map(|a| a.agent_id.clone()).collect();
    assert_eq!(ids, expected);
}

#[test]
fn malformed_once_recovers_on_retry() {
    let dir = tempfile::tempdir().unwrap();
    let q = Questionnaire::standard();
    let profile = BehaviorProfile { faults: Faults { malformed_attempts: 1, ..Faults::default() }, ..Default::default() };
    let out = run_poll(agents(), &common::taylor_context(), &q, &mock(42, profile), &fast(), dir.path()).unwrap();
    assert_eq!(out.n_ok, 1000);
    assert!(out.responses.iter().all(|r| r.retry_count == 1));
    let raw = read_raw_results(&dir.path().join(RAW_RESULTS_FILE)).unwrap();
    assert_eq!(raw.len(), 2000);
    assert_eq!(reprocess_run(dir.path(), &q).unwrap(), out.responses);
}

#[test]
fn persistent_over_selection_is_excluded() {
    let dir = tempfile::tempdir().unwrap();
    let q = Questionnaire::standard();
    let profile =
        BehaviorProfile { faults: Faults { over_select: vec!["q03".into()], ..Faults::default() }, ..Default::default() };
    let out = run_poll(&agents()[..200], &common::taylor_context(), &q, &mock(42, profile), &fast(), dir.path()).unwrap();
    assert_eq!((out.n_ok, out.n_failed), (0, 200));
    for r in &out.responses {
        assert_eq!(r.retry_count, 2);
        assert!(r.answers.is_empty());
        assert!(r.error.as_deref().unwrap().contains("q03"), "{:?}", r.error);
    }
    assert_eq!(read_raw_results(&dir.path().join(RAW_RESULTS_FILE)).unwrap().len(), 600);
}

#[test]
fn timeouts_retry_then_fail() {
    let q = Questionnaire::standard();
    let ctx = common::taylor_context();
    let once = BehaviorProfile { faults: Faults { timeout_attempts: 1, ..Faults::default() }, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let out = run_poll(&agents()[..50], &ctx, &q, &mock(1, once), &fast(), dir.path()).unwrap();
    assert_eq!(out.n_ok, 50);
    let always = BehaviorProfile { faults: Faults { timeout_attempts: 10, ..Faults::default() }, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let out = run_poll(&agents()[..50], &ctx, &q, &mock(1, always), &fast(), dir.path()).unwrap();
    assert_eq!(out.n_failed, 50);
    assert!(out.responses.iter().all(|r| r.error.as_deref() == Some("timeout")));
}

#[test]
fn seed_seven_is_reproducible() {
    let q = Questionnaire::standard();
    let ctx = common::taylor_context();
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = run_poll(&agents()[..300], &ctx, &q, &mock(7, BehaviorProfile::default()), &fast(), dir.path()).unwrap();
        let mut raw = read_raw_results(&dir.path().join(RAW_RESULTS_FILE)).unwrap();
        raw.sort_by(|a, b| a.custom_id.cmp(&b.custom_id));
        let responses = std::fs::read(dir.path().join(RESPONSES_FILE)).unwrap();
        (out.responses, raw, responses)
    };
    assert_eq!(run(), run());
    let other = mock(8, BehaviorProfile::default());
    assert_ne!(other.answer_text("agent-0001"), mock(7, BehaviorProfile::default()).answer_text("agent-0001"));
}

#[test]
fn weighted_frequencies_within_three_standard_errors() {
    let q = Questionnaire::standard();
    let w = [("Support", 0.5), ("Neutral", 0.3), ("Oppose", 0.2)];
    let m = mock(3, BehaviorProfile { weights: weights("q12", &w), ..Default::default() });
    let n = 10_000;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..n {
        let answers = parse_response(&m.answer_text(&agent_id(i)), &q).unwrap();
        *counts.entry(answers["q12"].selected[0].clone()).or_default() += 1;
    }
    assert_eq!(counts.len(), 3);
    for (label, p) in w {
        let got = counts[label] as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((got - p).abs() <= 3.0 * se, "{label}: {got} vs {p}");
    }
}

#[test]
fn multi_select_picks_respect_weights() {
    let q = Questionnaire::standard();
    let w = [("Higher Utility Bills", 1.0), ("Job Competition", 1.0)];
    let m = mock(3, BehaviorProfile { weights: weights("q03", &w), picks: 3, ..Default::default() });
    for i in 0..100 {
        let a = parse_response(&m.answer_text(&agent_id(i)), &q).unwrap();
        assert_eq!(a["q03"].selected, vec!["Higher Utility Bills".to_string(), "Job Competition".to_string()]);
        assert!(a.values().all(|x| x.selected.len() <= 3));
    }
}

#[test]
fn stratified_sampling_hits_exact_counts() {
    let q = Questionnaire::standard();
    let w = [("Strongly Support", 0.081), ("Support", 0.355), ("Neutral", 0.542), ("Oppose", 0.020), ("Strongly Oppose", 0.002)];
    let profile = BehaviorProfile {
        sampling: Sampling::Stratified,
        population_size: Some(1000),
        weights: weights("q12", &w),
        ..Default::default()
    };
    let m = mock(11, profile);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for i in 0..1000 {
        let a = parse_response(&m.answer_text(&agent_id(i)), &q).unwrap();
        *counts.entry(a["q12"].selected[0].clone()).or_default() += 1;
    }
    for (label, p) in w {
        assert_eq!(counts[label], (p * 1000.0_f64).round() as usize, "{label}");
    }
}

#[test]
fn fenced_replies_parse_like_bare_ones() {
    let q = Questionnaire::standard();
    let bare = mock(5, BehaviorProfile::default());
    let fenced = mock(5, BehaviorProfile { fenced: true, ..Default::default() });
    let t = fenced.answer_text("agent-0009");
    assert!(t.starts_with("```json\n"));
    assert_eq!(parse_response(&t, &q).unwrap(), parse_response(&bare.answer_text("agent-0009"), &q).unwrap());
}

#[test]
fn transient_submit_failures_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    let q = Questionnaire::standard();
    let profile = BehaviorProfile { faults: Faults { submit_failures: 3, ..Faults::default() }, ..Default::default() };
    let out = run_poll(&agents()[..250], &common::taylor_context(), &q, &mock(2, profile), &fast(), dir.path()).unwrap();
    assert_eq!(out.n_ok, 250);
}

#[test]
fn hard_provider_failure_persists_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let q = Questionnaire::standard();
    let profile = BehaviorProfile { faults: Faults { fail_submits: true, ..Faults::default() }, ..Default::default() };
    let mut cfg = fast();
    cfg.exec.max_submit_retries = 2;
    let err = run_poll(&agents()[..20], &common::taylor_context(), &q, &mock(2, profile), &cfg, dir.path()).unwrap_err();
    assert!(matches!(err, PollError::Provider { .. }), "{err}");
    assert!(dir.path().join(RESPONSES_INCOMPLETE_FILE).exists());
    assert!(!dir.path().join(RESPONSES_FILE).exists());
}

#[test]
fn duplicate_agent_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let two = vec![agents()[0].clone(), agents()[0].clone()];
    let err = run_poll(&two, &common::taylor_context(), &Questionnaire::standard(), &mock(1, Default::default()), &fast(), dir.path())
        .unwrap_err();
    assert!(matches!(err, PollError::DuplicateId(_)));
}

/// Serves canned HTTP responses, one per connection, in order.
fn fake_server(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (code, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let resp = format!(
                "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
        bodies
    });
    (url, handle)
}

fn request(id: &str) -> ProviderRequest {
    ProviderRequest {
        custom_id: id.into(),
        system_text: "context".into(),
        user_text: "questions".into(),
        model: "test-model".into(),
        temperature: None,
        max_output_tokens: None,
    }
}

#[test]
fn live_provider_against_fake_server() {
    let completion = serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": "{\"q01\": \"Mixed\"}" } }],
        "usage": { "prompt_tokens": 12, "completion_tokens": 5 }
    })
    .to_string();
    let (url, server) = fake_server(vec![(200, completion), (500, "{\"error\":\"busy\"}".into())]);
    let p = OpenAiCompatible::new(format!("{url}/v1"), "k", Duration::from_secs(10));
    let out = execute_batch(&p, &[request("a"), request("b")], &ExecConfig::default()).unwrap();
    assert_eq!(out[0].status, ResultStatus::Ok);
    assert_eq!(out[0].raw_text, "{\"q01\": \"Mixed\"}");
    assert_eq!((out[0].input_tokens, out[0].output_tokens), (12, 5));
    assert_eq!(out[1].status, ResultStatus::ProviderError);
    let bodies = server.join().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(sent["model"], "test-model");
    assert_eq!(sent["messages"][0]["content"], "context");
    assert_eq!(sent["messages"][1]["role"], "user");
    assert!(sent.get("temperature").is_none());
}

#[test]
fn live_provider_auth_failure_is_fatal() {
    let (url, server) = fake_server(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let p = OpenAiCompatible::new(url, "wrong", Duration::from_secs(10));
    let err = execute_batch(&p, &[request("a")], &ExecConfig::default()).unwrap_err();
    assert!(matches!(err, ProviderError::Fatal(_)));
    server.join().unwrap();
}

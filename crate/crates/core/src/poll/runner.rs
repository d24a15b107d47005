use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    parse_response, JobStatus, ParseStatus, PollError, Provider, ProviderError, ProviderRequest, ProviderResult,
    ResultStatus, SurveyResponse,
};
use crate::fsutil::write_atomic;
use crate::impact::RegionalContext;
use crate::survey::{render_user_prompt, Questionnaire};
use crate::synth::AgentProfile;

pub const REQUESTS_FILE: &str = "requests.jsonl";
pub const RAW_RESULTS_FILE: &str = "raw_results.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const RESPONSES_INCOMPLETE_FILE: &str = "responses.incomplete.jsonl";

/// Batch execution knobs shared by survey polling and topic extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecConfig {
    pub batch_size: usize,
    /// Batch jobs in flight at once.
    pub concurrency: usize,
    /// Resubmissions of a batch after transient provider errors.
    pub max_submit_retries: u32,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub poll_interval_ms: u64,
    /// A job still pending after this long counts as timed out.
    pub job_timeout_secs: u64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            concurrency: 4,
            max_submit_retries: 5,
            backoff_base_ms: 500,
            backoff_max_ms: 60_000,
            poll_interval_ms: 1_000,
            job_timeout_secs: 86_400,
        }
    }
}

impl ExecConfig {
    pub fn validate(&self) -> Result<(), PollError> {
        if self.batch_size == 0 || self.concurrency == 0 {
            return Err(PollError::Config("batch_size and concurrency must be at least 1".into()));
        }
        Ok(())
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.backoff_base_ms.saturating_mul(1u64 << attempt.min(20)).min(self.backoff_max_ms);
        let jitter: f64 = rand::rng().random_range(0.5..=1.0);
        Duration::from_millis((exp as f64 * jitter) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollRunConfig {
    pub model: String,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    /// Re-asks after an invalid, malformed or failed reply.
    pub max_retries: u32,
    pub exec: ExecConfig,
}

impl Default for PollRunConfig {
    fn default() -> Self {
        Self { model: "mock".into(), temperature: None, max_output_tokens: None, max_retries: 2, exec: ExecConfig::default() }
    }
}

/// One provider result exactly as received, tagged with its attempt number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub custom_id: String,
    pub attempt: u32,
    pub status: ResultStatus,
    pub raw_text: String,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PollOutcome {
    pub responses: Vec<SurveyResponse>,
    pub n_ok: usize,
    pub n_failed: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Submits one batch, waits for it and fetches its results, backing off and
/// resubmitting on transient errors. A job that outlives the timeout yields
/// timeout results for all its requests.
pub fn execute_batch(
    provider: &dyn Provider,
    requests: &[ProviderRequest],
    cfg: &ExecConfig,
) -> Result<Vec<ProviderResult>, ProviderError> {
    let mut last = String::new();
    for attempt in 0..=cfg.max_submit_retries {
        if attempt > 0 {
            let pause = cfg.backoff(attempt - 1);
            log::warn!("{}: retrying batch in {:?} after: {last}", provider.name(), pause);
            std::thread::sleep(pause);
        }
        match run_job(provider, requests, cfg) {
            Ok(results) => return Ok(results),
            Err(ProviderError::Transient(m)) => last = m,
            Err(fatal) => return Err(fatal),
        }
    }
    Err(ProviderError::Fatal(format!("gave up after {} submissions: {last}", cfg.max_submit_retries + 1)))
}

fn run_job(
    provider: &dyn Provider,
    requests: &[ProviderRequest],
    cfg: &ExecConfig,
) -> Result<Vec<ProviderResult>, ProviderError> {
    let job = provider.submit(requests)?;
    let started = Instant::now();
    loop {
        match provider.poll(&job)? {
            JobStatus::Completed => return provider.fetch(&job),
            JobStatus::Failed(m) => return Err(ProviderError::Transient(format!("job {} failed: {m}", job.0))),
            JobStatus::Pending if started.elapsed() >= Duration::from_secs(cfg.job_timeout_secs) => {
                return Ok(requests
                    .iter()
                    .map(|r| ProviderResult {
                        custom_id: r.custom_id.clone(),
                        raw_text: String::new(),
                        status: ResultStatus::Timeout,
                        input_tokens: 0,
                        output_tokens: 0,
                    })
                    .collect());
            }
            JobStatus::Pending => std::thread::sleep(Duration::from_millis(cfg.poll_interval_ms)),
        }
    }
}

fn record_error(r: &RawRecord) -> Option<String> {
    match r.status {
        ResultStatus::Ok => None,
        ResultStatus::Timeout => Some("timeout".into()),
        ResultStatus::ProviderError => Some(format!("provider_error: {}", r.raw_text)),
    }
}

fn judge(r: &RawRecord, q: &Questionnaire) -> Result<BTreeMap<String, crate::survey::NormalizedAnswer>, String> {
    if let Some(e) = record_error(r) {
        return Err(e);
    }
    parse_response(&r.raw_text, q).map_err(|e| e.to_string())
}

/// Rebuilds one response per id from raw records: the first attempt that
/// parses wins; otherwise the last attempt's error is kept.
pub fn responses_from_raw(ids: &[String], records: &[RawRecord], q: &Questionnaire) -> Vec<SurveyResponse> {
    let mut by_id: HashMap<&str, Vec<&RawRecord>> = HashMap::new();
    for r in records {
        by_id.entry(r.custom_id.as_str()).or_default().push(r);
    }
    for v in by_id.values_mut() {
        v.sort_by_key(|r| r.attempt);
    }
    ids.par_iter()
        .map(|id| {
            let mut resp = SurveyResponse {
                agent_id: id.clone(),
                answers: BTreeMap::new(),
                parse_status: ParseStatus::Failed,
                retry_count: 0,
                error: Some("no result recorded".into()),
            };
            for r in by_id.get(id.as_str()).map(Vec::as_slice).unwrap_or_default() {
                resp.retry_count = r.attempt;
                match judge(r, q) {
                    Ok(answers) => {
                        resp.answers = answers;
                        resp.parse_status = ParseStatus::Ok;
                        resp.error = None;
                        break;
                    }
                    Err(e) => resp.error = Some(e),
                }
            }
            resp
        })
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>, PollError> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PollError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn read_raw_results(path: &Path) -> Result<Vec<RawRecord>, PollError> {
    read_jsonl(path)
}

/// Re-derives normalized responses from a run directory's persisted files.
pub fn reprocess_run(run_dir: &Path, q: &Questionnaire) -> Result<Vec<SurveyResponse>, PollError> {
    let requests: Vec<ProviderRequest> = read_jsonl(&run_dir.join(REQUESTS_FILE))?;
    let ids: Vec<String> = requests.into_iter().map(|r| r.custom_id).collect();
    let raw = read_raw_results(&run_dir.join(RAW_RESULTS_FILE))?;
    Ok(responses_from_raw(&ids, &raw, q))
}

/// Builds one request per agent sharing the regional context as system text.
pub fn build_requests(
    agents: &[AgentProfile],
    context: &RegionalContext,
    q: &Questionnaire,
    cfg: &PollRunConfig,
) -> Result<Vec<ProviderRequest>, PollError> {
    let mut seen = HashSet::new();
    agents
        .iter()
        .map(|a| {
            if !seen.insert(a.agent_id.as_str()) {
                return Err(PollError::DuplicateId(a.agent_id.clone()));
            }
            Ok(ProviderRequest {
                custom_id: a.agent_id.clone(),
                system_text: context.rendered_text.clone(),
                user_text: render_user_prompt(a, q)?,
                model: cfg.model.clone(),
                temperature: cfg.temperature,
                max_output_tokens: cfg.max_output_tokens,
            })
        })
        .collect()
}

pub fn run_poll(
    agents: &[AgentProfile],
    context: &RegionalContext,
    q: &Questionnaire,
    provider: &dyn Provider,
    cfg: &PollRunConfig,
    run_dir: &Path,
) -> Result<PollOutcome, PollError> {
    run_poll_with_progress(agents, context, q, provider, cfg, run_dir, &AtomicUsize::new(0))
}

/// Polls every agent, retrying bad replies up to `max_retries` times.
///
/// Raw results are appended to the run directory before they are parsed.
/// `progress` counts provider results received across all attempts.
pub fn run_poll_with_progress(
    agents: &[AgentProfile],
    context: &RegionalContext,
    q: &Questionnaire,
    provider: &dyn Provider,
    cfg: &PollRunConfig,
    run_dir: &Path,
    progress: &AtomicUsize,
) -> Result<PollOutcome, PollError> {
    cfg.exec.validate()?;
    let requests = build_requests(agents, context, q, cfg)?;
    fs::create_dir_all(run_dir)?;
    write_atomic(&run_dir.join(REQUESTS_FILE), &to_jsonl(&requests)?)?;
    let _ = fs::remove_file(run_dir.join(RESPONSES_INCOMPLETE_FILE));
    let raw_path = run_dir.join(RAW_RESULTS_FILE);
    let sink = Mutex::new(BufWriter::new(File::create(&raw_path)?));
    let ids: Vec<String> = requests.iter().map(|r| r.custom_id.clone()).collect();
    let mut records: Vec<RawRecord> = Vec::new();
    let mut pending: Vec<&ProviderRequest> = requests.iter().collect();

    for attempt in 0..=cfg.max_retries {
        if pending.is_empty() {
            break;
        }
        log::info!("poll attempt {attempt}: {} requests via {}", pending.len(), provider.name());
        let chunks: Vec<Vec<ProviderRequest>> =
            pending.chunks(cfg.exec.batch_size).map(|c| c.iter().map(|r| (*r).clone()).collect()).collect();
        let round = run_round(provider, &chunks, attempt, &cfg.exec, &sink, progress)?;
        let hard_failure = round.failure;
        records.extend(round.records);
        if let Some(message) = hard_failure {
            let partial = responses_from_raw(&ids, &records, q);
            let path = run_dir.join(RESPONSES_INCOMPLETE_FILE);
            write_atomic(&path, &to_jsonl(&partial)?)?;
            return Err(PollError::Provider { message, persisted: path.display().to_string() });
        }
        let latest: HashMap<&str, &RawRecord> =
            records.iter().filter(|r| r.attempt == attempt).map(|r| (r.custom_id.as_str(), r)).collect();
        pending.retain(|r| latest.get(r.custom_id.as_str()).is_none_or(|rec| judge(rec, q).is_err()));
    }

    let responses = responses_from_raw(&ids, &records, q);
    write_atomic(&run_dir.join(RESPONSES_FILE), &to_jsonl(&responses)?)?;
    let n_ok = responses.iter().filter(|r| r.is_ok()).count();
    Ok(PollOutcome {
        n_failed: responses.len() - n_ok,
        n_ok,
        input_tokens: records.iter().map(|r| r.input_tokens).sum(),
        output_tokens: records.iter().map(|r| r.output_tokens).sum(),
        responses,
    })
}

struct Round {
    records: Vec<RawRecord>,
    failure: Option<String>,
}

/// Runs all chunks of one attempt with bounded concurrency. A hard failure
/// stops workers from taking further chunks.
fn run_round(
    provider: &dyn Provider,
    chunks: &[Vec<ProviderRequest>],
    attempt: u32,
    exec: &ExecConfig,
    sink: &Mutex<BufWriter<File>>,
    progress: &AtomicUsize,
) -> Result<Round, PollError> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let collected: Mutex<Vec<(usize, Vec<RawRecord>)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<String>> = Mutex::new(None);
    let io_error: Mutex<Option<PollError>> = Mutex::new(None);
    let workers = exec.concurrency.min(chunks.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                while !stop.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(chunk) = chunks.get(i) else { break };
                    match execute_batch(provider, chunk, exec) {
                        Ok(results) => {
                            let recs = align(chunk, results, attempt);
                            if let Err(e) = append(sink, &recs) {
                                *io_error.lock().expect("io slot") = Some(e);
                                stop.store(true, Ordering::SeqCst);
                            }
                            progress.fetch_add(recs.len(), Ordering::SeqCst);
                            collected.lock().expect("records").push((i, recs));
                        }
                        Err(e) => {
                            failure.lock().expect("failure slot").get_or_insert(e.to_string());
                            stop.store(true, Ordering::SeqCst);
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = io_error.into_inner().expect("io slot") {
        return Err(e);
    }
    let mut collected = collected.into_inner().expect("records");
    collected.sort_by_key(|(i, _)| *i);
    Ok(Round {
        records: collected.into_iter().flat_map(|(_, r)| r).collect(),
        failure: failure.into_inner().expect("failure slot"),
    })
}

/// One record per request in submission order; ids the provider dropped
/// become provider errors and unknown or repeated ids are ignored.
fn align(chunk: &[ProviderRequest], results: Vec<ProviderResult>, attempt: u32) -> Vec<RawRecord> {
    let mut by_id: HashMap<String, ProviderResult> = HashMap::new();
    for r in results {
        if by_id.contains_key(&r.custom_id) {
            log::warn!("provider returned {} twice; keeping the first", r.custom_id);
        } else {
            by_id.insert(r.custom_id.clone(), r);
        }
    }
    let recs: Vec<RawRecord> = chunk
        .iter()
        .map(|req| match by_id.remove(&req.custom_id) {
            Some(r) => RawRecord {
                custom_id: r.custom_id,
                attempt,
                status: r.status,
                raw_text: r.raw_text,
                input_tokens: r.input_tokens,
                output_tokens: r.output_tokens,
            },
            None => RawRecord {
                custom_id: req.custom_id.clone(),
                attempt,
                status: ResultStatus::ProviderError,
                raw_text: "missing from provider results".into(),
                input_tokens: 0,
                output_tokens: 0,
            },
        })
        .collect();
    for id in by_id.keys() {
        log::warn!("provider returned unrequested id {id}");
    }
    recs
}

fn append(sink: &Mutex<BufWriter<File>>, recs: &[RawRecord]) -> Result<(), PollError> {
    let bytes = to_jsonl(recs)?;
    let mut w = sink.lock().expect("raw sink");
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

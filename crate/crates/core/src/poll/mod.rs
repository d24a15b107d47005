//! Batch polling of agents through a pluggable LLM provider.

mod live;
mod mock;
mod runner;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survey::{validate_answer, NormalizedAnswer, Questionnaire, SurveyError};

pub use live::OpenAiCompatible;
pub use mock::{BehaviorProfile, Faults, LdtaBehavior, MockProvider, PhraseRule, Sampling, ThemeRule};
pub use runner::{
    build_requests, execute_batch, read_raw_results, reprocess_run, responses_from_raw, run_poll, run_poll_with_progress, ExecConfig, PollOutcome, PollRunConfig,
    RawRecord, RAW_RESULTS_FILE, REQUESTS_FILE, RESPONSES_FILE, RESPONSES_INCOMPLETE_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub custom_id: String,
    pub system_text: String,
    pub user_text: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Ok,
    ProviderError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderResult {
    pub custom_id: String,
    pub raw_text: String,
    pub status: ResultStatus,
    #[serde(default)]
    pub input_tokens: u64,
    #[serde(default)]
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JobHandle(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JobStatus {
    Pending,
    Completed,
    Failed(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Worth retrying after a pause (rate limits, 5xx, connection resets).
    #[error("transient provider error: {0}")]
    Transient(String),
    #[error("provider error: {0}")]
    Fatal(String),
}

/// Batch-shaped provider contract: submit a job, poll it, fetch its results.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn submit(&self, requests: &[ProviderRequest]) -> Result<JobHandle, ProviderError>;
    fn poll(&self, job: &JobHandle) -> Result<JobStatus, ProviderError>;
    fn fetch(&self, job: &JobHandle) -> Result<Vec<ProviderResult>, ProviderError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("unknown answer key `{0}`")]
    UnknownKey(String),
    #[error(transparent)]
    Answer(#[from] SurveyError),
}

#[derive(Debug, Error)]
pub enum PollError {
    #[error("provider failed after retries: {message}; partial results persisted in {persisted}")]
    Provider { message: String, persisted: String },
    #[error(transparent)]
    Survey(#[from] SurveyError),
    #[error("duplicate custom_id {0}")]
    DuplicateId(String),
    #[error("poll run files: {0}")]
    Io(#[from] std::io::Error),
    #[error("poll record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid poll configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub agent_id: String,
    pub answers: BTreeMap<String, NormalizedAnswer>,
    pub parse_status: ParseStatus,
    /// Attempts beyond the first.
    pub retry_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SurveyResponse {
    pub fn is_ok(&self) -> bool {
        self.parse_status == ParseStatus::Ok
    }
}

/// The first JSON object in `text`, skipping code fences and surrounding prose.
pub fn first_json_object(text: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    for (i, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<serde_json::Value>();
        if let Some(Ok(serde_json::Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

/// Maps an answer key onto a question id: `q01`, `q1`, `1`, `question_1`, `question_1_id`.
fn resolve_key<'a>(key: &str, q: &'a Questionnaire) -> Option<&'a str> {
    if let Some(id) = q.ids().find(|id| *id == key) {
        return Some(id);
    }
    let k = key.trim().to_ascii_lowercase();
    let digits = k
        .strip_prefix("question_")
        .map(|r| r.strip_suffix("_id").unwrap_or(r))
        .or_else(|| k.strip_prefix('q'))
        .unwrap_or(&k);
    let n: usize = digits.parse().ok()?;
    q.questions.get(n.checked_sub(1)?).map(|x| x.id.as_str())
}

/// Extracts and validates all answers from a raw model reply.
pub fn parse_response(raw_text: &str, q: &Questionnaire) -> Result<BTreeMap<String, NormalizedAnswer>, ParseError> {
    let obj = first_json_object(raw_text).ok_or(ParseError::NoJson)?;
    let mut raw: BTreeMap<&str, &serde_json::Value> = BTreeMap::new();
    for (k, v) in &obj {
        let id = resolve_key(k, q).ok_or_else(|| ParseError::UnknownKey(k.clone()))?;
        raw.insert(id, v);
    }
    let mut out = BTreeMap::new();
    for question in &q.questions {
        let value = raw
            .get(question.id.as_str())
            .ok_or_else(|| SurveyError::MissingAnswer { question: question.id.clone() })?;
        out.insert(question.id.clone(), validate_answer(question, value)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_answers() -> serde_json::Value {
        serde_json::json!({
            "q01": "Mixed", "q02": "Tax Revenue, Job Creation", "q03": "Higher Utility Bills",
            "q04": "Worried", "q05": "Water Consumption", "q06": "Water Conservation",
            "q07": "Willing", "q08": "Neutral", "q09": "Academic Research", "q10": "Mixed",
            "q11": "Lower Utility Bills", "q12": "Neutral", "q13": "Protect our water."
        })
    }

    #[test]
    fn fenced_equals_bare() {
        let q = Questionnaire::standard();
        let bare = full_answers().to_string();
        let fenced = format!("Here you go:\n```json\n{bare}\n```\n");
        let a = parse_response(&bare, &q).unwrap();
        assert_eq!(a.len(), 13);
        assert_eq!(parse_response(&fenced, &q).unwrap(), a);
    }

    #[test]
    fn missing_question() {
        let q = Questionnaire::standard();
        let mut v = full_answers();
        v.as_object_mut().unwrap().remove("q13");
        assert_eq!(
            parse_response(&v.to_string(), &q),
            Err(ParseError::Answer(SurveyError::MissingAnswer { question: "q13".into() }))
        );
    }

    #[test]
    fn key_aliases_and_unknown_keys() {
        let q = Questionnaire::standard();
        let mut v = full_answers();
        let m = v.as_object_mut().unwrap();
        let a1 = m.remove("q01").unwrap();
        m.insert("question_1_id".into(), a1);
        let a2 = m.remove("q02").unwrap();
        m.insert("q2".into(), a2);
        assert_eq!(parse_response(&v.to_string(), &q).unwrap().len(), 13);
        m_insert(&mut v, "mood", "fine");
        assert_eq!(parse_response(&v.to_string(), &q), Err(ParseError::UnknownKey("mood".into())));
        assert_eq!(resolve_key("q0", &q), None);
        assert_eq!(resolve_key("14", &q), None);
    }

    fn m_insert(v: &mut serde_json::Value, k: &str, s: &str) {
        v.as_object_mut().unwrap().insert(k.into(), s.into());
    }

    #[test]
    fn no_json() {
        let q = Questionnaire::standard();
        assert_eq!(parse_response("I'd rather not say.", &q), Err(ParseError::NoJson));
        assert_eq!(parse_response("{\"q01\": \"Mixed\", ", &q), Err(ParseError::NoJson));
    }
}

//! OpenAI-compatible chat-completions provider behind the batch contract.
//!
//! Each submitted job is executed synchronously, one HTTP call per request;
//! the job handle then refers to the stored results.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use super::{JobHandle, JobStatus, PollError, Provider, ProviderError, ProviderRequest, ProviderResult, ResultStatus};

pub struct OpenAiCompatible {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
    jobs: Mutex<(u64, HashMap<String, Vec<ProviderResult>>)>,
}

impl OpenAiCompatible {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            agent,
            jobs: Mutex::new((0, HashMap::new())),
        }
    }

    /// Reads the key from `PROVIDER_API_KEY`.
    pub fn from_env(base_url: impl Into<String>, timeout: Duration) -> Result<Self, PollError> {
        let key = std::env::var("PROVIDER_API_KEY")
            .map_err(|_| PollError::Config("PROVIDER_API_KEY is not set for the live provider".into()))?;
        Ok(Self::new(base_url, key, timeout))
    }

    fn call(&self, req: &ProviderRequest) -> Result<ProviderResult, ProviderError> {
        let mut body = serde_json::json!({
            "model": req.model,
            "messages": [
                { "role": "system", "content": req.system_text },
                { "role": "user", "content": req.user_text },
            ],
        });
        if let Some(t) = req.temperature {
            body["temperature"] = t.into();
        }
        if let Some(m) = req.max_output_tokens {
            body["max_tokens"] = m.into();
        }
        let failed = |status, text: String| ProviderResult {
            custom_id: req.custom_id.clone(),
            raw_text: text,
            status,
            input_tokens: 0,
            output_tokens: 0,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Ok(failed(ResultStatus::Timeout, String::new())),
            Err(e) => return Ok(failed(ResultStatus::ProviderError, e.to_string())),
        };
        let code = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Ok(failed(ResultStatus::Timeout, String::new())),
            Err(e) => return Ok(failed(ResultStatus::ProviderError, e.to_string())),
        };
        if code == 401 || code == 403 {
            return Err(ProviderError::Fatal(format!("HTTP {code}: {text}")));
        }
        if code != 200 {
            return Ok(failed(ResultStatus::ProviderError, format!("HTTP {code}: {text}")));
        }
        let v: serde_json::Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return Ok(failed(ResultStatus::ProviderError, format!("bad completion body: {e}"))),
        };
        let Some(content) = v["choices"][0]["message"]["content"].as_str() else {
            return Ok(failed(ResultStatus::ProviderError, "completion has no message content".into()));
        };
        Ok(ProviderResult {
            custom_id: req.custom_id.clone(),
            raw_text: content.to_string(),
            status: ResultStatus::Ok,
            input_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            output_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        })
    }
}

impl Provider for OpenAiCompatible {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    fn submit(&self, requests: &[ProviderRequest]) -> Result<JobHandle, ProviderError> {
        let results = requests.iter().map(|r| self.call(r)).collect::<Result<Vec<_>, _>>()?;
        let mut jobs = self.jobs.lock().expect("job store");
        jobs.0 += 1;
        let handle = JobHandle(format!("job-{}", jobs.0));
        jobs.1.insert(handle.0.clone(), results);
        Ok(handle)
    }

    fn poll(&self, job: &JobHandle) -> Result<JobStatus, ProviderError> {
        let jobs = self.jobs.lock().expect("job store");
        Ok(if jobs.1.contains_key(&job.0) { JobStatus::Completed } else { JobStatus::Failed(format!("unknown job {}", job.0)) })
    }

    fn fetch(&self, job: &JobHandle) -> Result<Vec<ProviderResult>, ProviderError> {
        self.jobs.lock().expect("job store").1.remove(&job.0).ok_or_else(|| ProviderError::Fatal(format!("unknown job {}", job.0)))
    }
}

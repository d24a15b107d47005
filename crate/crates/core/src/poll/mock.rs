//! Deterministic, seed-driven stand-in for an LLM batch provider.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{JobHandle, JobStatus, PollError, Provider, ProviderError, ProviderRequest, ProviderResult, ResultStatus};
use crate::survey::{QuestionKind, Questionnaire, NO_ADDITIONAL_THOUGHTS};
use crate::synth::agent_index;

/// How a single-select answer's uniform variate is produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Independent draw per agent.
    #[default]
    Iid,
    /// Agent i gets `(perm(i) + 0.5) / N` for a seeded permutation per
    /// question, so counts over the whole population match the weights to
    /// the nearest agent.
    Stratified,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Faults {
    /// The first k attempts per agent time out.
    pub timeout_attempts: u32,
    /// The next k attempts per agent return truncated JSON.
    pub malformed_attempts: u32,
    /// Questions that always receive four selections.
    pub over_select: Vec<String>,
    /// The first k submit calls fail with a transient error.
    pub submit_failures: u32,
    /// Every submit call fails with a transient error.
    pub fail_submits: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseRule {
    /// Case-insensitive substring of the response text.
    pub contains: String,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeRule {
    pub theme: String,
    pub phrases: Vec<String>,
}

/// Canned topic-analysis behavior, routed by `ldta-` custom ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdtaBehavior {
    pub phrase_rules: Vec<PhraseRule>,
    pub themes: Vec<ThemeRule>,
}

impl Default for LdtaBehavior {
    fn default() -> Self {
        let rule = |c: &str, p: &str| PhraseRule { contains: c.into(), phrase: p.into() };
        let theme = |t: &str, ps: &[&str]| ThemeRule { theme: t.into(), phrases: ps.iter().map(|s| s.to_string()).collect() };
        Self {
            phrase_rules: vec![
                rule("water", "water supply"),
                rule("utility", "utility bills"),
                rule("jobs", "local jobs"),
                rule("noise", "noise"),
            ],
            themes: vec![
                theme("Water Resource Protection", &["water supply"]),
                theme("Utility Costs", &["utility bills"]),
                theme("Local Jobs and Employment", &["local jobs"]),
                theme("Quality of Life", &["noise"]),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorProfile {
    pub sampling: Sampling,
    /// Agents in the run; required for stratified sampling.
    pub population_size: Option<usize>,
    /// Per question, option label to weight. Unlisted questions are uniform
    /// over their options other than "Other".
    pub weights: BTreeMap<String, BTreeMap<String, f64>>,
    /// Selections per multi-select answer.
    pub picks: usize,
    /// Candidate open-text answers, chosen uniformly.
    pub open_texts: Vec<String>,
    /// Wrap replies in a ```json fence.
    pub fenced: bool,
    pub faults: Faults,
    pub ldta: LdtaBehavior,
}

impl Default for BehaviorProfile {
    fn default() -> Self {
        Self {
            sampling: Sampling::Iid,
            population_size: None,
            weights: BTreeMap::new(),
            picks: 2,
            open_texts: vec![
                "Protect our water supply before anything else.".into(),
                "Keep utility bills from going up for families here.".into(),
                "Guarantee local jobs and training for people who live here.".into(),
                "Water use and utility costs worry me more than anything.".into(),
                NO_ADDITIONAL_THOUGHTS.into(),
            ],
            fenced: false,
            faults: Faults::default(),
            ldta: LdtaBehavior::default(),
        }
    }
}

struct Dist {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl Dist {
    /// Inverse CDF at `u` in [0, 1), skipping `excluded` indices.
    fn pick(&self, u: f64, excluded: &[usize]) -> Option<usize> {
        let live: Vec<usize> = (0..self.labels.len()).filter(|i| !excluded.contains(i) && self.weights[*i] > 0.0).collect();
        let total: f64 = live.iter().map(|&i| self.weights[i]).sum();
        let mut acc = 0.0;
        for (k, &i) in live.iter().enumerate() {
            acc += self.weights[i] / total;
            if u < acc || k + 1 == live.len() {
                return Some(i);
            }
        }
        None
    }
}

#[derive(Default)]
struct State {
    submits: u32,
    next_job: u64,
    attempts: HashMap<String, u32>,
    jobs: HashMap<String, Vec<ProviderResult>>,
}

pub struct MockProvider {
    seed: u64,
    profile: BehaviorProfile,
    questionnaire: Questionnaire,
    dists: BTreeMap<String, Dist>,
    perms: BTreeMap<String, Vec<usize>>,
    state: Mutex<State>,
}

fn keyed_rng(seed: u64, custom_id: &str, question: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}|{custom_id}|{question}").as_bytes());
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

impl MockProvider {
    pub fn new(seed: u64, profile: BehaviorProfile, questionnaire: &Questionnaire) -> Result<Self, PollError> {
        let cfg = |m: String| PollError::Config(m);
        for (qid, w) in &profile.weights {
            let q = questionnaire.get(qid).ok_or_else(|| cfg(format!("weights for unknown question {qid}")))?;
            if q.kind == QuestionKind::OpenText {
                return Err(cfg(format!("{qid}: open-text answers come from open_texts, not weights")));
            }
            for (label, &v) in w {
                if !q.options.contains(label) {
                    return Err(cfg(format!("{qid}: `{label}` is not an option")));
                }
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(cfg(format!("{qid}: weight for `{label}` must be nonnegative")));
                }
            }
            if w.values().sum::<f64>() <= 0.0 {
                return Err(cfg(format!("{qid}: weights sum to zero")));
            }
        }
        if profile.picks == 0 {
            return Err(cfg("picks must be at least 1".into()));
        }
        if profile.open_texts.is_empty() {
            return Err(cfg("open_texts must not be empty".into()));
        }
        let mut dists = BTreeMap::new();
        for q in &questionnaire.questions {
            let dist = match (q.kind, profile.weights.get(&q.id)) {
                (QuestionKind::OpenText, _) => {
                    Dist { labels: profile.open_texts.clone(), weights: vec![1.0; profile.open_texts.len()] }
                }
                (_, Some(w)) => Dist {
                    labels: q.options.clone(),
                    weights: q.options.iter().map(|o| w.get(o).copied().unwrap_or(0.0)).collect(),
                },
                (_, None) => Dist {
                    labels: q.options.clone(),
                    weights: q.options.iter().map(|o| if o.starts_with("Other") { 0.0 } else { 1.0 }).collect(),
                },
            };
            dists.insert(q.id.clone(), dist);
        }
        let mut perms = BTreeMap::new();
        if profile.sampling == Sampling::Stratified {
            let n = profile.population_size.ok_or_else(|| cfg("stratified sampling needs population_size".into()))?;
            for q in &questionnaire.questions {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut keyed_rng(seed, "permutation", &q.id));
                perms.insert(q.id.clone(), perm);
            }
        }
        Ok(Self { seed, profile, questionnaire: questionnaire.clone(), dists, perms, state: Mutex::new(State::default()) })
    }

    fn uniform(&self, custom_id: &str, qid: &str, rng: &mut ChaCha8Rng) -> f64 {
        if let Some(perm) = self.perms.get(qid) {
            if let Some(i) = agent_index(custom_id).filter(|&i| i < perm.len()) {
                return (perm[i] as f64 + 0.5) / perm.len() as f64;
            }
        }
        rng.random::<f64>()
    }

    /// The well-formed reply for one agent. Identical on every attempt.
    pub fn answer_text(&self, custom_id: &str) -> String {
        let mut obj = serde_json::Map::new();
        for q in &self.questionnaire.questions {
            let dist = &self.dists[&q.id];
            let mut rng = keyed_rng(self.seed, custom_id, &q.id);
            let value = if self.profile.faults.over_select.contains(&q.id) {
                let four: Vec<&str> =
                    q.options.iter().filter(|o| !o.starts_with("Other")).take(4).map(String::as_str).collect();
                four.join(", ")
            } else {
                match q.kind {
                    QuestionKind::SingleSelect | QuestionKind::OpenText => {
                        let u = self.uniform(custom_id, &q.id, &mut rng);
                        dist.labels[dist.pick(u, &[]).expect("positive weight exists")].clone()
                    }
                    QuestionKind::MultiSelectMax3 => {
                        let mut chosen = Vec::new();
                        for _ in 0..self.profile.picks.min(3) {
                            match dist.pick(rng.random::<f64>(), &chosen) {
                                Some(i) => chosen.push(i),
                                None => break,
                            }
                        }
                        chosen.sort_unstable();
                        chosen.iter().map(|&i| dist.labels[i].as_str()).collect::<Vec<_>>().join(", ")
                    }
                }
            };
            obj.insert(q.id.clone(), serde_json::Value::String(value));
        }
        let body = serde_json::to_string_pretty(&obj).expect("map serializes");
        if self.profile.fenced {
            format!("```json\n{body}\n```")
        } else {
            body
        }
    }

    fn ldta_extract(&self, user_text: &str) -> String {
        let text = user_text.rsplit_once("Response:\n").map_or(user_text, |(_, t)| t).to_lowercase();
        let mut phrases: Vec<&str> = Vec::new();
        for r in &self.profile.ldta.phrase_rules {
            if text.contains(&r.contains.to_lowercase()) && !phrases.contains(&r.phrase.as_str()) {
                phrases.push(&r.phrase);
            }
        }
        phrases.truncate(3);
        serde_json::json!({ "phrases": phrases }).to_string()
    }

    fn ldta_themes(&self, user_text: &str) -> String {
        let listed: Vec<String> = user_text
            .rsplit_once("Phrases:\n")
            .and_then(|(_, t)| serde_json::from_str(t.trim()).ok())
            .unwrap_or_default();
        let themes: Vec<serde_json::Value> = self
            .profile
            .ldta
            .themes
            .iter()
            .filter_map(|t| {
                let ps: Vec<&String> = listed.iter().filter(|p| t.phrases.contains(p)).collect();
                (!ps.is_empty()).then(|| serde_json::json!({ "theme": t.theme, "phrases": ps }))
            })
            .collect();
        serde_json::json!({ "themes": themes }).to_string()
    }

    fn respond(&self, req: &ProviderRequest, attempt: u32) -> ProviderResult {
        let f = &self.profile.faults;
        let (status, raw_text) = if req.custom_id.starts_with("ldta-extract-") {
            (ResultStatus::Ok, self.ldta_extract(&req.user_text))
        } else if req.custom_id == "ldta-themes" {
            (ResultStatus::Ok, self.ldta_themes(&req.user_text))
        } else if attempt < f.timeout_attempts {
            (ResultStatus::Timeout, String::new())
        } else if attempt < f.timeout_attempts + f.malformed_attempts {
            let full = self.answer_text(&req.custom_id);
            let mut cut = full.len() / 2;
            while !full.is_char_boundary(cut) {
                cut -= 1;
            }
            (ResultStatus::Ok, full[..cut].to_string())
        } else {
            (ResultStatus::Ok, self.answer_text(&req.custom_id))
        };
        ProviderResult {
            custom_id: req.custom_id.clone(),
            input_tokens: ((req.system_text.len() + req.user_text.len()) / 4) as u64,
            output_tokens: (raw_text.len() / 4) as u64,
            raw_text,
            status,
        }
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn submit(&self, requests: &[ProviderRequest]) -> Result<JobHandle, ProviderError> {
        let mut st = self.state.lock().expect("mock state");
        st.submits += 1;
        if self.profile.faults.fail_submits || st.submits <= self.profile.faults.submit_failures {
            return Err(ProviderError::Transient(format!("mock submit failure #{}", st.submits)));
        }
        let mut results = Vec::with_capacity(requests.len());
        for req in requests {
            let attempt = st.attempts.entry(req.custom_id.clone()).or_insert(0);
            let a = *attempt;
            *attempt += 1;
            results.push(self.respond(req, a));
        }
        st.next_job += 1;
        let handle = JobHandle(format!("mock-job-{}", st.next_job));
        st.jobs.insert(handle.0.clone(), results);
        Ok(handle)
    }

    fn poll(&self, job: &JobHandle) -> Result<JobStatus, ProviderError> {
        let st = self.state.lock().expect("mock state");
        Ok(if st.jobs.contains_key(&job.0) { JobStatus::Completed } else { JobStatus::Failed(format!("unknown job {}", job.0)) })
    }

    fn fetch(&self, job: &JobHandle) -> Result<Vec<ProviderResult>, ProviderError> {
        let mut st = self.state.lock().expect("mock state");
        st.jobs.remove(&job.0).ok_or_else(|| ProviderError::Fatal(format!("unknown job {}", job.0)))
    }
}

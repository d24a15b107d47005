//! Topic analysis with LLM calls in place of embeddings and clustering:
//! per-response phrase extraction, one phrase-to-theme grouping call, then
//! exact-membership counting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::bankers_tenths;
use crate::poll::{execute_batch, first_json_object, ExecConfig, Provider, ProviderRequest, ResultStatus, SurveyResponse};
use crate::survey::OTHER_SPECIFY;
use crate::template::render_template;

const EXTRACT_TEMPLATE: &str = include_str!("../../templates/ldta_extract.txt");
const THEMES_TEMPLATE: &str = include_str!("../../templates/ldta_themes.txt");
pub const EXTRACT_PREFIX: &str = "ldta-extract-";
pub const THEMES_ID: &str = "ldta-themes";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdtaConfig {
    pub model: String,
    pub max_phrases: usize,
    pub max_themes: usize,
    pub exec: ExecConfig,
}

impl Default for LdtaConfig {
    fn default() -> Self {
        Self { model: "mock".into(), max_phrases: 3, max_themes: 10, exec: ExecConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseExtraction {
    pub response_id: String,
    pub phrases: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThemeCount {
    pub theme: String,
    pub phrases: Vec<String>,
    /// Responses with at least one phrase in this theme.
    pub count: u64,
    /// Percent of responses with a successful extraction; themes may sum past 100.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TopicReport {
    pub themes: Vec<ThemeCount>,
    pub phrase_extractions: Vec<PhraseExtraction>,
    pub n_responses: u64,
    pub n_extraction_failed: u64,
    pub theme_stage_failed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl TopicReport {
    pub fn is_partial(&self) -> bool {
        self.n_extraction_failed > 0 || self.theme_stage_failed
    }
}

/// Substantive open-text answers to `question_id` from ok responses, by agent id.
pub fn open_texts(responses: &[SurveyResponse], question_id: &str) -> Vec<(String, String)> {
    let mut v: Vec<(String, String)> = responses
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| {
            let a = r.answers.get(question_id)?;
            let t = a.other_text.as_ref()?;
            a.selected.iter().any(|s| s == OTHER_SPECIFY).then(|| (r.agent_id.clone(), t.clone()))
        })
        .collect();
    v.sort();
    v
}

fn string_list(v: &serde_json::Value) -> Option<Vec<String>> {
    v.as_array()?.iter().map(|p| p.as_str().map(|s| s.trim().to_string())).collect()
}

fn parse_phrases(raw: &str, max: usize) -> Result<Vec<String>, String> {
    let obj = first_json_object(raw).ok_or("no JSON object in phrase reply")?;
    let list = obj.get("phrases").and_then(string_list).ok_or("reply lacks a `phrases` string list")?;
    let mut out: Vec<String> = Vec::new();
    for p in list {
        if !p.is_empty() && !out.contains(&p) {
            out.push(p);
        }
    }
    out.truncate(max);
    Ok(out)
}

fn parse_themes(raw: &str, max: usize) -> Result<Vec<(String, Vec<String>)>, String> {
    let obj = first_json_object(raw).ok_or("no JSON object in theme reply")?;
    let list = obj.get("themes").and_then(|v| v.as_array()).ok_or("reply lacks a `themes` list")?;
    let mut out = Vec::new();
    for t in list {
        let label = t.get("theme").and_then(|v| v.as_str()).ok_or("theme entry without a label")?;
        let phrases = t.get("phrases").and_then(string_list).ok_or("theme entry without phrases")?;
        out.push((label.trim().to_string(), phrases));
    }
    out.truncate(max);
    Ok(out)
}

fn request(custom_id: String, system_text: String, user_text: String, cfg: &LdtaConfig) -> ProviderRequest {
    ProviderRequest { custom_id, system_text, user_text, model: cfg.model.clone(), temperature: None, max_output_tokens: None }
}

/// Runs the three stages. Provider failures leave a partial report that
/// counts what failed rather than an error.
pub fn ldta(texts: &[(String, String)], provider: &dyn Provider, cfg: &LdtaConfig) -> TopicReport {
    let mut report = TopicReport { n_responses: texts.len() as u64, ..TopicReport::default() };
    if texts.is_empty() {
        return report;
    }
    let vars = BTreeMap::from([("MAX_PHRASES", cfg.max_phrases.to_string()), ("MAX_THEMES", cfg.max_themes.to_string())]);
    let extract_system = render_template(EXTRACT_TEMPLATE, &vars).expect("extraction template placeholders");
    let themes_system = render_template(THEMES_TEMPLATE, &vars).expect("theme template placeholders");

    let requests: Vec<ProviderRequest> = texts
        .iter()
        .map(|(id, t)| request(format!("{EXTRACT_PREFIX}{id}"), extract_system.clone(), format!("Response:\n{t}"), cfg))
        .collect();
    for chunk in requests.chunks(cfg.exec.batch_size.max(1)) {
        let results = match execute_batch(provider, chunk, &cfg.exec) {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(format!("phrase extraction batch: {e}"));
                Vec::new()
            }
        };
        let mut by_id: BTreeMap<&str, _> = results.iter().map(|r| (r.custom_id.as_str(), r)).collect();
        for req in chunk {
            let response_id = req.custom_id[EXTRACT_PREFIX.len()..].to_string();
            let outcome = match by_id.remove(req.custom_id.as_str()) {
                None => Err("no result".to_string()),
                Some(r) if r.status != ResultStatus::Ok => Err(format!("{:?}", r.status)),
                Some(r) => parse_phrases(&r.raw_text, cfg.max_phrases),
            };
            let (phrases, error) = match outcome {
                Ok(p) => (p, None),
                Err(e) => {
                    report.n_extraction_failed += 1;
                    (Vec::new(), Some(e))
                }
            };
            report.phrase_extractions.push(PhraseExtraction { response_id, phrases, error });
        }
    }

    let all: BTreeSet<&str> =
        report.phrase_extractions.iter().flat_map(|p| p.phrases.iter().map(String::as_str)).collect();
    if all.is_empty() {
        return report;
    }
    let listed = serde_json::to_string(&all).expect("phrase list serializes");
    let req = request(THEMES_ID.into(), themes_system, format!("Phrases:\n{listed}"), cfg);
    let grouped = match execute_batch(provider, std::slice::from_ref(&req), &cfg.exec) {
        Ok(results) => match results.into_iter().find(|r| r.custom_id == THEMES_ID) {
            Some(r) if r.status == ResultStatus::Ok => parse_themes(&r.raw_text, cfg.max_themes),
            Some(r) => Err(format!("theme grouping: {:?}", r.status)),
            None => Err("theme grouping: no result".into()),
        },
        Err(e) => Err(format!("theme grouping: {e}")),
    };
    let grouped = match grouped {
        Ok(g) => g,
        Err(e) => {
            report.theme_stage_failed = true;
            report.errors.push(e);
            return report;
        }
    };

    let extracted = report.n_responses - report.n_extraction_failed;
    let mut themes: Vec<ThemeCount> = grouped
        .into_iter()
        .map(|(theme, phrases)| {
            let members: BTreeSet<&str> = phrases.iter().map(String::as_str).collect();
            let count = report
                .phrase_extractions
                .iter()
                .filter(|p| p.phrases.iter().any(|x| members.contains(x.as_str())))
                .count() as u64;
            let percent = if extracted == 0 { 0.0 } else { bankers_tenths(count, extracted) as f64 / 10.0 };
            ThemeCount { theme, phrases, count, percent }
        })
        .collect();
    themes.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.theme.cmp(&b.theme)));
    report.themes = themes;
    report
}

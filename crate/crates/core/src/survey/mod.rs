//! The 13-question instrument, answer normalization and per-agent prompts.

mod prompt;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{render_user_prompt, PromptPair, AGENT_PROMPT_TEMPLATE};

pub const QUESTIONNAIRE_V1: &str = include_str!("../../templates/questionnaire_v1.json");

pub const OTHER_SPECIFY: &str = "Other (please specify)";
pub const NO_ADDITIONAL_THOUGHTS: &str = "No additional thoughts";
pub const MAX_SELECTIONS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurveyError {
    #[error("invalid questionnaire: {0}")]
    Questionnaire(String),
    #[error("agent {agent_id} has no {field}")]
    MissingAttribute { agent_id: String, field: String },
    #[error("{question}: answer missing")]
    MissingAnswer { question: String },
    #[error("{question}: `{answer}` is not an option")]
    InvalidAnswer { question: String, answer: String },
    #[error("{question}: {count} selections, at most {MAX_SELECTIONS} allowed")]
    OverSelection { question: String, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    SingleSelect,
    MultiSelectMax3,
    OpenText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub id: String,
    pub text: String,
    pub kind: QuestionKind,
    pub options: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Questionnaire {
    pub version: u32,
    pub questions: Vec<Question>,
}

impl Questionnaire {
    /// The bundled instrument.
    pub fn standard() -> Self {
        Self::from_json(QUESTIONNAIRE_V1).expect("bundled questionnaire is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, SurveyError> {
        let q: Questionnaire =
            serde_json::from_str(text).map_err(|e| SurveyError::Questionnaire(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), SurveyError> {
        let bad = |m: String| Err(SurveyError::Questionnaire(m));
        if self.questions.len() != 13 {
            return bad(format!("expected 13 questions, found {}", self.questions.len()));
        }
        let open = self.questions.iter().filter(|q| q.kind == QuestionKind::OpenText).count();
        if open != 1 {
            return bad(format!("expected exactly one open-text question, found {open}"));
        }
        let mut ids = HashSet::new();
        for q in &self.questions {
            if !ids.insert(q.id.as_str()) {
                return bad(format!("duplicate question id {}", q.id));
            }
            match q.kind {
                QuestionKind::OpenText if q.options != [NO_ADDITIONAL_THOUGHTS, OTHER_SPECIFY] => {
                    return bad(format!("{}: open-text options must be `{NO_ADDITIONAL_THOUGHTS}` and `{OTHER_SPECIFY}`", q.id));
                }
                QuestionKind::SingleSelect | QuestionKind::MultiSelectMax3 if q.options.len() < 2 => {
                    return bad(format!("{}: needs at least two options", q.id));
                }
                _ => {}
            }
            let mut seen = HashSet::new();
            if let Some(dup) = q.options.iter().find(|o| !seen.insert(fold(o))) {
                return bad(format!("{}: duplicate option `{dup}`", q.id));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.questions.iter().map(|q| q.id.as_str())
    }
}

/// Canonical selections for one question. Open-text answers select either
/// "No additional thoughts" or "Other (please specify)" with the text as payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedAnswer {
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other_text: Option<String>,
}

/// Lower-cased with runs of whitespace collapsed.
fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Question {
    fn other_option(&self) -> Option<&String> {
        self.options.iter().find(|o| fold(o).starts_with("other"))
    }

    fn exact(&self, piece: &str) -> Option<&String> {
        let f = fold(piece);
        self.options.iter().find(|o| fold(o) == f)
    }

    /// An "Other" selection with its payload, e.g. `Other: more parks`.
    fn other_with_payload(&self, piece: &str) -> Option<(&String, Option<String>)> {
        let other = self.other_option()?;
        let trimmed = piece.trim();
        if !trimmed.get(..5)?.eq_ignore_ascii_case("other") {
            return None;
        }
        let mut rest = &trimmed[5..];
        const SPECIFY: &str = "(please specify)";
        let after_space = rest.trim_start();
        if after_space.get(..SPECIFY.len()).is_some_and(|h| h.eq_ignore_ascii_case(SPECIFY)) {
            rest = &after_space[SPECIFY.len()..];
        }
        // A word continuing past "other" (e.g. "Others", "Otherwise") is not the option.
        if rest.chars().next().is_some_and(|c| c.is_alphanumeric()) {
            return None;
        }
        let payload = rest.trim_start_matches(|c: char| c.is_whitespace() || ":-–—=(".contains(c));
        let payload = payload.trim().trim_end_matches(')').trim();
        Some((other, (!payload.is_empty()).then(|| payload.to_string())))
    }
}

/// Raw pieces of an answer: a string, or a JSON array of strings.
fn pieces(q: &Question, raw: &serde_json::Value) -> Result<Vec<String>, SurveyError> {
    let invalid = |a: &serde_json::Value| SurveyError::InvalidAnswer { question: q.id.clone(), answer: a.to_string() };
    match raw {
        serde_json::Value::Null => Ok(Vec::new()),
        serde_json::Value::String(s) if q.kind == QuestionKind::MultiSelectMax3 => {
            Ok(s.split(',').map(str::to_string).collect())
        }
        serde_json::Value::String(s) => Ok(vec![s.clone()]),
        serde_json::Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| invalid(v)))
            .collect(),
        other => Err(invalid(other)),
    }
}

/// Maps a raw answer onto canonical options: exact match after case and
/// whitespace folding, with "Other" payloads kept verbatim.
pub fn validate_answer(q: &Question, raw: &serde_json::Value) -> Result<NormalizedAnswer, SurveyError> {
    let missing = || SurveyError::MissingAnswer { question: q.id.clone() };
    let parts: Vec<String> = pieces(q, raw)?.into_iter().filter(|p| !p.trim().is_empty()).collect();
    if parts.is_empty() {
        return Err(missing());
    }
    if q.kind == QuestionKind::OpenText {
        let text = parts.join(", ").trim().to_string();
        if fold(&text) == fold(NO_ADDITIONAL_THOUGHTS) {
            return Ok(NormalizedAnswer { selected: vec![NO_ADDITIONAL_THOUGHTS.into()], other_text: None });
        }
        let payload = match q.other_with_payload(&text) {
            Some((_, p)) if fold(&text).starts_with("other (please specify)") => p,
            _ => Some(text),
        };
        return match payload {
            Some(p) => Ok(NormalizedAnswer { selected: vec![OTHER_SPECIFY.into()], other_text: Some(p) }),
            None => Err(missing()),
        };
    }

    let mut selected: Vec<String> = Vec::new();
    let mut other_text: Option<String> = None;
    let mut in_other = false;
    for part in &parts {
        if let Some(opt) = q.exact(part) {
            if !selected.contains(opt) {
                selected.push(opt.clone());
            }
            in_other = false;
        } else if let Some((opt, payload)) = q.other_with_payload(part) {
            if !selected.contains(opt) {
                selected.push(opt.clone());
            }
            if let Some(p) = payload {
                other_text = Some(match other_text.take() {
                    Some(prev) => format!("{prev}, {p}"),
                    None => p,
                });
            }
            in_other = true;
        } else if in_other {
            // Commas inside an "Other" payload.
            let t = part.trim();
            other_text = Some(match other_text.take() {
                Some(prev) => format!("{prev}, {t}"),
                None => t.to_string(),
            });
        } else {
            return Err(SurveyError::InvalidAnswer { question: q.id.clone(), answer: part.trim().to_string() });
        }
    }
    let limit = if q.kind == QuestionKind::SingleSelect { 1 } else { MAX_SELECTIONS };
    if selected.len() > limit {
        return Err(if q.kind == QuestionKind::SingleSelect {
            SurveyError::InvalidAnswer { question: q.id.clone(), answer: parts.join(",") }
        } else {
            SurveyError::OverSelection { question: q.id.clone(), count: selected.len() }
        });
    }
    Ok(NormalizedAnswer { selected, other_text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn q(id: &str) -> Question {
        Questionnaire::standard().get(id).unwrap().clone()
    }

    #[test]
    fn bundled_instrument_is_valid() {
        let s = Questionnaire::standard();
        assert_eq!(s.questions.len(), 13);
        assert_eq!(s.ids().collect::<Vec<_>>()[12], "q13");
        assert!(s.get("q10").unwrap().options.contains(&"Other".to_string()));
    }

    #[test]
    fn folding_and_dedupe() {
        let a = validate_answer(&q("q02"), &json!("tax revenue ,  JOB CREATION, Tax Revenue")).unwrap();
        assert_eq!(a.selected, ["Tax Revenue", "Job Creation"]);
        assert_eq!(a.other_text, None);
    }

    #[test]
    fn other_payload_keeps_commas() {
        let a = validate_answer(&q("q02"), &json!("Job Creation, Other: parks, trails")).unwrap();
        assert_eq!(a.selected, ["Job Creation", OTHER_SPECIFY]);
        assert_eq!(a.other_text.as_deref(), Some("parks, trails"));
        let b = validate_answer(&q("q10"), &json!("Other - depends on the bill")).unwrap();
        assert_eq!(b.selected, ["Other"]);
        assert_eq!(b.other_text.as_deref(), Some("depends on the bill"));
    }

    #[test]
    fn over_selection_and_invalid() {
        let err = validate_answer(&q("q03"), &json!("Higher Utility Bills, Job Competition, Noise Limits")).unwrap_err();
        assert!(matches!(err, SurveyError::InvalidAnswer { .. }));
        let four = json!("Higher Utility Bills, Job Competition, Property Tax Increases, Public Service Strain");
        assert_eq!(
            validate_answer(&q("q03"), &four).unwrap_err(),
            SurveyError::OverSelection { question: "q03".into(), count: 4 }
        );
        assert!(matches!(validate_answer(&q("q12"), &json!("Support, Oppose")), Err(SurveyError::InvalidAnswer { .. })));
        assert!(matches!(validate_answer(&q("q12"), &json!(" ")), Err(SurveyError::MissingAnswer { .. })));
        assert!(matches!(validate_answer(&q("q12"), &json!(null)), Err(SurveyError::MissingAnswer { .. })));
        assert!(matches!(validate_answer(&q("q12"), &json!(4)), Err(SurveyError::InvalidAnswer { .. })));
        assert!(matches!(validate_answer(&q("q12"), &json!("Otherwise")), Err(SurveyError::InvalidAnswer { .. })));
    }

    #[test]
    fn open_text() {
        let a = validate_answer(&q("q13"), &json!("  no additional THOUGHTS ")).unwrap();
        assert_eq!(a.selected, [NO_ADDITIONAL_THOUGHTS]);
        let b = validate_answer(&q("q13"), &json!("Protect the aquifer, please.")).unwrap();
        assert_eq!(b.selected, [OTHER_SPECIFY]);
        assert_eq!(b.other_text.as_deref(), Some("Protect the aquifer, please."));
        let c = validate_answer(&q("q13"), &json!("Other (please specify): water first")).unwrap();
        assert_eq!(c.other_text.as_deref(), Some("water first"));
    }

    #[test]
    fn array_answers() {
        let a = validate_answer(&q("q05"), &json!(["Noise", "grid impact"])).unwrap();
        assert_eq!(a.selected, ["Noise", "Grid Impact"]);
    }

    #[test]
    fn rejects_malformed_questionnaires() {
        let mut s = Questionnaire::standard();
        s.questions[1].id = "q01".into();
        assert!(s.validate().is_err());
        let mut s = Questionnaire::standard();
        s.questions.pop();
        assert!(s.validate().is_err());
        let mut s = Questionnaire::standard();
        s.questions[0].options.truncate(1);
        assert!(s.validate().is_err());
    }
}

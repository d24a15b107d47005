use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Questionnaire, SurveyError};
use crate::attribute::Attribute;
use crate::synth::AgentProfile;
use crate::template::render_template;

pub const AGENT_PROMPT_TEMPLATE: &str = include_str!("../../templates/agent_prompt.txt");

/// The cacheable system message and one agent's user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system_text: String,
    pub user_text: String,
}

const PLACEHOLDERS: [(&str, Attribute); 12] = [
    ("AGE_GROUP", Attribute::AgeGroup),
    ("SEX", Attribute::Sex),
    ("RACE", Attribute::Race),
    ("ETHNICITY", Attribute::Ethnicity),
    ("EDUCATION_LEVEL", Attribute::EducationLevel),
    ("MARITAL_STATUS", Attribute::MaritalStatus),
    ("LANGUAGE_SPOKEN_AT_HOME", Attribute::LanguageAtHome),
    ("CITIZENSHIP", Attribute::Citizenship),
    ("EMPLOYMENT_STATUS", Attribute::EmploymentStatus),
    ("HOUSEHOLD_INCOME", Attribute::HouseholdIncome),
    ("HOUSING", Attribute::Housing),
    ("VEHICLES", Attribute::Vehicles),
];

fn survey_block(q: &Questionnaire) -> String {
    let mut out = String::new();
    for (i, question) in q.questions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{}. {}", question.id, question.text);
        for opt in &question.options {
            let _ = writeln!(out, "- {opt}");
        }
    }
    out.truncate(out.trim_end().len());
    out
}

fn response_structure(q: &Questionnaire) -> String {
    let keys: Vec<String> = q.ids().map(|id| format!("    \"{id}\": \"your_answer\"")).collect();
    format!("{{\n{}\n}}", keys.join(",\n"))
}

/// Fills the agent prompt with the resident's attributes and the questionnaire.
pub fn render_user_prompt(agent: &AgentProfile, q: &Questionnaire) -> Result<String, SurveyError> {
    let mut values = BTreeMap::new();
    for (name, attr) in PLACEHOLDERS {
        let v = agent.get(attr).ok_or_else(|| SurveyError::MissingAttribute {
            agent_id: agent.agent_id.clone(),
            field: attr.as_str().to_string(),
        })?;
        values.insert(name, v.to_string());
    }
    values.insert("SURVEY_QUESTIONS", survey_block(q));
    values.insert("RESPONSE_STRUCTURE", response_structure(q));
    render_template(AGENT_PROMPT_TEMPLATE, &values)
        .map_err(|p| SurveyError::MissingAttribute { agent_id: agent.agent_id.clone(), field: p })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_lists_every_key() {
        let s = response_structure(&Questionnaire::standard());
        assert!(s.starts_with("{\n    \"q01\": \"your_answer\",\n"));
        assert!(s.ends_with("    \"q13\": \"your_answer\"\n}"));
    }
}

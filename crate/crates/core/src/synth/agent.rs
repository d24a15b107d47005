use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attribute::{age_lower_bound, is_adult_age, Attribute};
use crate::census::variables::{ENROLLED, NOT_ENROLLED};

/// One virtual resident. Attributes are category names from the county tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: String,
    #[serde(flatten)]
    pub attributes: BTreeMap<Attribute, String>,
}

/// Stable id for the agent at zero-based `index`.
pub fn agent_id(index: usize) -> String {
    format!("agent-{:04}", index + 1)
}

/// Zero-based index back from an id produced by [`agent_id`].
pub fn agent_index(id: &str) -> Option<usize> {
    id.strip_prefix("agent-")?.parse::<usize>().ok()?.checked_sub(1)
}

impl AgentProfile {
    pub fn new(agent_id: impl Into<String>) -> Self {
        Self { agent_id: agent_id.into(), attributes: BTreeMap::new() }
    }

    pub fn get(&self, attribute: Attribute) -> Option<&str> {
        self.attributes.get(&attribute).map(String::as_str)
    }

    pub fn set(&mut self, attribute: Attribute, value: impl Into<String>) {
        self.attributes.insert(attribute, value.into());
    }

    pub fn is_complete(&self) -> bool {
        Attribute::ALL.iter().all(|a| self.attributes.contains_key(a))
    }

    /// Checks the adult-age and age-appropriate-education invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let age = self.get(Attribute::AgeGroup).ok_or("missing age_group")?;
        if !is_adult_age(age) {
            return Err(format!("{}: age group `{age}` is not adult", self.agent_id));
        }
        if let Some(edu) = self.get(Attribute::EducationLevel) {
            let enrollment = edu == ENROLLED || edu == NOT_ENROLLED;
            let young = age_lower_bound(age).is_some_and(|lo| lo < 25);
            if young != enrollment {
                return Err(format!("{}: education `{edu}` inconsistent with age `{age}`", self.agent_id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        assert_eq!(agent_id(0), "agent-0001");
        assert_eq!(agent_id(12345), "agent-12346");
        assert_eq!(agent_index("agent-0001"), Some(0));
        assert_eq!(agent_index("agent-12346"), Some(12345));
        assert_eq!(agent_index("agent-0000"), None);
        assert_eq!(agent_index("x-1"), None);
    }

    #[test]
    fn invariants() {
        let mut a = AgentProfile::new("agent-0001");
        a.set(Attribute::AgeGroup, "20 to 24 years");
        a.set(Attribute::EducationLevel, ENROLLED);
        assert!(a.check_invariants().is_ok());
        a.set(Attribute::EducationLevel, "Bachelor's degree");
        assert!(a.check_invariants().is_err());
        a.set(Attribute::AgeGroup, "10 to 14 years");
        assert!(a.check_invariants().is_err());
    }

    #[test]
    fn json_field_order_follows_attribute_order() {
        let mut a = AgentProfile::new("agent-0001");
        a.set(Attribute::EducationLevel, "x");
        a.set(Attribute::Sex, "Male");
        a.set(Attribute::AgeGroup, "25 to 34 years");
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"agent_id":"agent-0001","age_group":"25 to 34 years","sex":"Male","education_level":"x"}"#);
        assert_eq!(serde_json::from_str::<AgentProfile>(&s).unwrap(), a);
    }
}

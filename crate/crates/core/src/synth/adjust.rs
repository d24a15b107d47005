//! Post-sampling assignment of marital status and education.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::agent::AgentProfile;
use super::sample::{stream_rng, Stream};
use super::SynthError;
use crate::attribute::{age_lower_bound, Attribute};
use crate::census::MarginalTable;

/// Multiplies the weight of `category` for agents whose age group starts in
/// `[min_age, below_age)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeMultiplier {
    pub category: String,
    #[serde(default)]
    pub min_age: Option<u32>,
    #[serde(default)]
    pub below_age: Option<u32>,
    pub factor: f64,
}

impl AgeMultiplier {
    fn applies(&self, age_lo: u32) -> bool {
        self.min_age.is_none_or(|m| age_lo >= m) && self.below_age.is_none_or(|b| age_lo < b)
    }
}

/// Age adjustments applied to the sex-conditional marital distribution.
pub fn default_marital_multipliers() -> Vec<AgeMultiplier> {
    vec![
        AgeMultiplier { category: "Never Married".into(), min_age: None, below_age: Some(25), factor: 3.0 },
        AgeMultiplier { category: "Widowed".into(), min_age: Some(75), below_age: None, factor: 4.0 },
    ]
}

fn adult_age(agent: &AgentProfile) -> Result<u32, SynthError> {
    let age = agent
        .get(Attribute::AgeGroup)
        .ok_or_else(|| SynthError::Precondition(format!("{}: age_group missing", agent.agent_id)))?;
    match age_lower_bound(age) {
        Some(lo) if lo >= 18 => Ok(lo),
        _ => Err(SynthError::Precondition(format!("{}: age group `{age}` is not adult", agent.agent_id))),
    }
}

/// Draws marital status from the agent's sex-specific table, reweighted by
/// the age multipliers and renormalized.
pub fn assign_marital_status(
    agents: &mut [AgentProfile],
    by_sex: &BTreeMap<String, MarginalTable>,
    multipliers: &[AgeMultiplier],
    seed: u64,
) -> Result<(), SynthError> {
    if let Some(m) = multipliers.iter().find(|m| !(m.factor >= 0.0) || !m.factor.is_finite()) {
        return Err(SynthError::Config(format!("multiplier for `{}` must be nonnegative", m.category)));
    }
    let mut rng = stream_rng(seed, Stream::Marital);
    for agent in agents.iter_mut() {
        let age_lo = adult_age(agent)?;
        let sex = agent
            .get(Attribute::Sex)
            .ok_or_else(|| SynthError::Precondition(format!("{}: sex missing", agent.agent_id)))?;
        let table = by_sex
            .get(sex)
            .ok_or_else(|| SynthError::Config(format!("no marital status table for sex `{sex}`")))?;
        let weights: Vec<f64> = table
            .categories()
            .iter()
            .zip(table.proportions())
            .map(|(cat, p)| {
                multipliers
                    .iter()
                    .filter(|m| &m.category == cat && m.applies(age_lo))
                    .fold(p, |w, m| w * m.factor)
            })
            .collect();
        let dist = WeightedIndex::new(&weights)
            .map_err(|e| SynthError::Config(format!("marital table for `{sex}` unusable: {e}")))?;
        let pick = table.categories()[dist.sample(&mut rng)].clone();
        agent.set(Attribute::MaritalStatus, pick);
    }
    Ok(())
}

/// Gives agents aged 18 to 24 an enrollment category and agents 25 and over
/// a detailed attainment category.
pub fn assign_education(
    agents: &mut [AgentProfile],
    enrollment: &MarginalTable,
    attainment: &MarginalTable,
    seed: u64,
) -> Result<(), SynthError> {
    let dist = |t: &MarginalTable| {
        WeightedIndex::new(t.counts().iter().map(|&c| c as f64))
            .map_err(|e| SynthError::Config(format!("{:?} table unusable: {e}", t.role())))
    };
    let young = dist(enrollment)?;
    let old = dist(attainment)?;
    let mut rng = stream_rng(seed, Stream::Education);
    for agent in agents.iter_mut() {
        let age_lo = adult_age(agent)?;
        let pick = if age_lo < 25 {
            enrollment.categories()[young.sample(&mut rng)].clone()
        } else {
            attainment.categories()[old.sample(&mut rng)].clone()
        };
        agent.set(Attribute::EducationLevel, pick);
    }
    Ok(())
}

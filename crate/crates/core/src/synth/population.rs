use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adjust::{assign_education, assign_marital_status, default_marital_multipliers, AgeMultiplier};
use super::agent::AgentProfile;
use super::ipf::{ipf_fit, IpfConfig, JointDistribution};
use super::sample::sample_agents;
use super::verify::{verify_population, FitReport};
use super::SynthError;
use crate::attribute::Attribute;
use crate::census::CountyMarginals;
use crate::fsutil::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub agent_count: usize,
    pub seed: u64,
    pub ipf: IpfConfig,
    /// Significance level of the per-dimension goodness-of-fit test.
    pub alpha: f64,
    /// Regenerations allowed after the first attempt fails verification.
    pub max_retries: usize,
    pub marital_multipliers: Vec<AgeMultiplier>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            agent_count: 1000,
            seed: 42,
            ipf: IpfConfig::default(),
            alpha: 0.05,
            max_retries: 5,
            marital_multipliers: default_marital_multipliers(),
        }
    }
}

/// An accepted population and the verification that accepted it.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub agents: Vec<AgentProfile>,
    pub reports: Vec<FitReport>,
    pub joint: JointDistribution,
    /// Seed of the accepted attempt (`config.seed + retries`).
    pub accepted_seed: u64,
    pub retries: usize,
}

/// Builds one candidate population: sampling, then marital status and education.
pub fn generate(
    joint: &JointDistribution,
    marginals: &CountyMarginals,
    config: &SynthesisConfig,
    seed: u64,
) -> Result<Vec<AgentProfile>, SynthError> {
    let mut agents = sample_agents(joint, config.agent_count, seed)?;
    assign_marital_status(&mut agents, &marginals.marital_by_sex, &config.marital_multipliers, seed)?;
    assign_education(&mut agents, &marginals.enrollment, &marginals.attainment, seed)?;
    Ok(agents)
}

/// Fits, samples and verifies, regenerating with `seed + 1` while any
/// dimension fails, up to `max_retries` times.
pub fn synthesize(marginals: &CountyMarginals, config: &SynthesisConfig) -> Result<Synthesis, SynthError> {
    if config.agent_count < 30 {
        return Err(SynthError::Precondition(format!(
            "agent_count {} is below the 30 needed for verification",
            config.agent_count
        )));
    }
    let joint = ipf_fit(&marginals.fitted, &config.ipf)?;
    let mut history = Vec::new();
    for retry in 0..=config.max_retries {
        let seed = config.seed.wrapping_add(retry as u64);
        let agents = generate(&joint, marginals, config, seed)?;
        let reports = verify_population(&agents, &marginals.fitted, config.alpha)?;
        if reports.iter().all(|r| r.pass) {
            return Ok(Synthesis { agents, reports, joint, accepted_seed: seed, retries: retry });
        }
        let failed: Vec<_> = reports.iter().filter(|r| !r.pass).map(|r| r.dimension.as_str()).collect();
        log::info!("population with seed {seed} failed verification on {failed:?}; regenerating");
        history.push(reports);
    }
    Err(SynthError::RetriesExhausted { reports: history })
}

/// First line of a population file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationHeader {
    pub config_hash: String,
    pub seed: u64,
    pub agent_count: usize,
    pub fields: Vec<Attribute>,
}

#[derive(Serialize, Deserialize)]
struct PopulationRecord {
    agent_id: String,
    #[serde(flatten)]
    attributes: std::collections::BTreeMap<Attribute, String>,
    seed: u64,
    config_hash: String,
}

/// Writes the header line then one JSON record per agent, atomically.
pub fn write_population(path: &Path, agents: &[AgentProfile], config_hash: &str, seed: u64) -> Result<(), SynthError> {
    let header = PopulationHeader {
        config_hash: config_hash.to_string(),
        seed,
        agent_count: agents.len(),
        fields: Attribute::ALL.to_vec(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for a in agents {
        if !a.is_complete() {
            return Err(SynthError::Domain(format!("{} is missing attributes", a.agent_id)));
        }
        a.check_invariants().map_err(SynthError::Domain)?;
        let rec = PopulationRecord {
            agent_id: a.agent_id.clone(),
            attributes: a.attributes.clone(),
            seed,
            config_hash: config_hash.to_string(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())?;
    Ok(())
}

pub fn read_population(path: &Path) -> Result<(PopulationHeader, Vec<AgentProfile>), SynthError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let header: PopulationHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(SynthError::Domain(format!("{} is empty", path.display()))),
    };
    let mut agents = Vec::with_capacity(header.agent_count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PopulationRecord = serde_json::from_str(&line)?;
        let agent = AgentProfile { agent_id: rec.agent_id, attributes: rec.attributes };
        agent.check_invariants().map_err(SynthError::Domain)?;
        agents.push(agent);
    }
    if agents.len() != header.agent_count {
        return Err(SynthError::Domain(format!(
            "header declares {} agents, file holds {}",
            header.agent_count,
            agents.len()
        )));
    }
    Ok((header, agents))
}

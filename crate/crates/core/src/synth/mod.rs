//! Synthetic population: IPF joint fitting, seeded agent sampling,
//! post-sampling adjustments and chi-square verification.

mod adjust;
mod agent;
pub mod ipf;
mod population;
mod sample;
pub mod stats;
mod verify;

use thiserror::Error;

pub use adjust::{assign_education, assign_marital_status, default_marital_multipliers, AgeMultiplier};
pub use agent::{agent_id, agent_index, AgentProfile};
pub use ipf::{ipf_fit, IpfArray, IpfConfig, IpfOutcome, JointDistribution};
pub use population::{
    generate, read_population, synthesize, write_population, PopulationHeader, Synthesis, SynthesisConfig,
};
pub use sample::sample_agents;
pub use verify::{format_fit_table, observed_counts, verify_population, FitReport, MIN_EXPECTED};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("population failed verification after {} attempts", reports.len())]
    RetriesExhausted { reports: Vec<Vec<FitReport>> },
    #[error(transparent)]
    Census(#[from] crate::census::CensusError),
    #[error("population file: {0}")]
    Io(#[from] std::io::Error),
    #[error("population record: {0}")]
    Json(#[from] serde_json::Error),
}

//! County marginals and profile statistics from the ACS 5-year Data Profile
//! API, with a content-addressed on-disk cache that doubles as fixture storage.

mod client;
mod marginal;
mod profile;
pub mod variables;

use thiserror::Error;

pub use client::{AcsRequest, CensusClient, FetchMode, DEFAULT_BASE_URL, DEFAULT_YEAR};
pub use marginal::{
    derive_enrollment_table, partition_age_bracket, two_fifths_half_up, MarginalTable, PartitionOutcome,
    ADULT_TEEN_BRACKET, TEEN_BRACKET,
};
pub use profile::{CountyProfile, IndustryShare};
pub use variables::{AcsGroup, AcsVariableSet, MarginalSpec, TableRole};

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("census fetch failed: {0}")]
    Fetch(String),
    #[error("census response is missing variable {code}")]
    Schema { code: String },
    #[error("invalid census payload: {0}")]
    InvalidPayload(String),
    #[error("invalid variable set: {0}")]
    InvalidVariableSet(String),
    #[error("invalid marginal table: {0}")]
    InvalidTable(String),
    #[error("invalid FIPS code `{0}`")]
    InvalidFips(String),
    #[error("census cache I/O: {0}")]
    Io(#[from] std::io::Error),
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attribute::Attribute;

/// Every table the population synthesizer needs for one county.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountyMarginals {
    /// The ten fitted dimensions in update order; age already partitioned.
    pub fitted: Vec<MarginalTable>,
    /// Marital status tables keyed by sex category ("Male", "Female").
    pub marital_by_sex: BTreeMap<String, MarginalTable>,
    /// Detailed attainment, ages 25 and over.
    pub attainment: MarginalTable,
    /// College enrollment, ages 18 to 24.
    pub enrollment: MarginalTable,
}

impl CountyMarginals {
    pub fn table(&self, attribute: Attribute) -> Option<&MarginalTable> {
        self.fitted.iter().find(|t| t.dimension() == attribute)
    }

    /// Attributes covered across all tables.
    pub fn attributes(&self) -> std::collections::BTreeSet<Attribute> {
        let mut out: std::collections::BTreeSet<_> = self.fitted.iter().map(|t| t.dimension()).collect();
        out.extend(self.marital_by_sex.values().map(|t| t.dimension()));
        out.insert(self.attainment.dimension());
        out.insert(self.enrollment.dimension());
        out
    }

    /// Assembles county marginals from raw tables in the order returned by
    /// [`variables::standard_marginal_specs`].
    pub fn from_raw(tables: Vec<MarginalTable>) -> Result<Self, CensusError> {
        let mut fitted = Vec::new();
        let mut marital_by_sex = BTreeMap::new();
        let mut attainment = None;
        let mut enrollment = None;
        for t in tables {
            match t.role() {
                TableRole::Marginal if t.dimension() == Attribute::AgeGroup => {
                    fitted.push(partition_age_bracket(&t).table)
                }
                TableRole::Marginal => fitted.push(t),
                TableRole::MaleMarital => {
                    marital_by_sex.insert("Male".to_string(), t);
                }
                TableRole::FemaleMarital => {
                    marital_by_sex.insert("Female".to_string(), t);
                }
                TableRole::Attainment => attainment = Some(t),
                TableRole::Enrollment => enrollment = Some(derive_enrollment_table(&t)?),
            }
        }
        fitted.sort_by_key(|t| Attribute::IPF_ORDER.iter().position(|a| *a == t.dimension()));
        let dims: Vec<_> = fitted.iter().map(|t| t.dimension()).collect();
        if dims != Attribute::IPF_ORDER {
            return Err(CensusError::InvalidTable(format!("fitted dimensions {dims:?} incomplete")));
        }
        if marital_by_sex.len() != 2 {
            return Err(CensusError::InvalidTable("marital status tables need both sexes".into()));
        }
        Ok(Self {
            fitted,
            marital_by_sex,
            attainment: attainment.ok_or_else(|| CensusError::InvalidTable("attainment table missing".into()))?,
            enrollment: enrollment.ok_or_else(|| CensusError::InvalidTable("enrollment table missing".into()))?,
        })
    }
}

//! Energy, water, carbon, air-pollutant and economic figures for a proposed
//! data center, and the regional context text built from them.

mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{
    build_regional_context, format_fixed, format_trimmed, RegionalContext, StateContext,
    REGIONAL_CONTEXT_TEMPLATE,
};

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Share of permitted generator emissions assumed to be actually emitted.
pub const ACTUAL_TO_PERMITTED: f64 = 0.10;

#[derive(Debug, Error, PartialEq)]
pub enum ImpactError {
    #[error("invalid project spec: {0}")]
    InvalidSpec(String),
    #[error("missing value for placeholder [{placeholder}]")]
    MissingValue { placeholder: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pollutant {
    #[serde(rename = "NOx")]
    Nox,
    #[serde(rename = "VOCs")]
    Vocs,
    #[serde(rename = "PM2.5")]
    Pm25,
    #[serde(rename = "SO2")]
    So2,
}

impl Pollutant {
    pub const ALL: [Pollutant; 4] = [Pollutant::Nox, Pollutant::Vocs, Pollutant::Pm25, Pollutant::So2];

    pub fn as_str(self) -> &'static str {
        match self {
            Pollutant::Nox => "NOx",
            Pollutant::Vocs => "VOCs",
            Pollutant::Pm25 => "PM2.5",
            Pollutant::So2 => "SO2",
        }
    }
}

/// Construction and operating economics, passed through to the context text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Economics {
    pub construction_duration_months: String,
    pub construction_jobs: u64,
    pub construction_activity_musd: f64,
    pub construction_tax_musd: f64,
    pub operational_jobs: u64,
    pub salary_kusd: f64,
    pub operational_activity_musd: f64,
    pub operational_tax_musd: f64,
}

impl Default for Economics {
    fn default() -> Self {
        Self {
            construction_duration_months: "18-24".into(),
            construction_jobs: 1700,
            construction_activity_musd: 240.0,
            construction_tax_musd: 10.0,
            operational_jobs: 160,
            salary_kusd: 50.0,
            operational_activity_musd: 32.0,
            operational_tax_musd: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectSpec {
    pub rated_capacity_mw: f64,
    pub capacity_factor: f64,
    pub pue: f64,
    pub wue_l_per_kwh: f64,
    pub ewif_l_per_kwh: f64,
    /// Short tons of CO2 per MWh.
    pub state_emission_factor: f64,
    /// Short tons per MWh.
    pub pollutant_intensities: BTreeMap<Pollutant, f64>,
    pub economics: Economics,
}

/// Northern Virginia permitted generator limits, short tons per year.
pub const PERMITTED_TONS: [(Pollutant, f64); 4] =
    [(Pollutant::Nox, 13_000.0), (Pollutant::Vocs, 1_400.0), (Pollutant::Pm25, 600.0), (Pollutant::So2, 50.0)];

/// Placeholder for the regional data center energy denominator, MWh per year.
pub const REGIONAL_DC_ENERGY_MWH: f64 = 33_851_000.0;

/// Placeholder Texas grid factor, short tons CO2 per MWh.
pub const DEFAULT_STATE_EMISSION_FACTOR: f64 = 0.418;

impl Default for ProjectSpec {
    fn default() -> Self {
        Self {
            rated_capacity_mw: 100.0,
            capacity_factor: 0.70,
            pue: 1.1,
            wue_l_per_kwh: 0.36,
            ewif_l_per_kwh: 3.14,
            state_emission_factor: DEFAULT_STATE_EMISSION_FACTOR,
            pollutant_intensities: PERMITTED_TONS
                .iter()
                .map(|&(p, tons)| (p, derive_intensity(tons, ACTUAL_TO_PERMITTED, REGIONAL_DC_ENERGY_MWH)))
                .collect(),
            economics: Economics::default(),
        }
    }
}

impl ProjectSpec {
    pub fn validate(&self) -> Result<(), ImpactError> {
        let bad = |msg: String| Err(ImpactError::InvalidSpec(msg));
        if !(self.rated_capacity_mw > 0.0 && self.rated_capacity_mw.is_finite()) {
            return bad(format!("rated_capacity_mw must be positive, got {}", self.rated_capacity_mw));
        }
        if !(self.capacity_factor > 0.0 && self.capacity_factor <= 1.0) {
            return bad(format!("capacity_factor must be in (0, 1], got {}", self.capacity_factor));
        }
        if !(self.pue >= 1.0 && self.pue.is_finite()) {
            return bad(format!("pue must be at least 1, got {}", self.pue));
        }
        for (name, v) in [
            ("wue_l_per_kwh", self.wue_l_per_kwh),
            ("ewif_l_per_kwh", self.ewif_l_per_kwh),
            ("state_emission_factor", self.state_emission_factor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        for (p, &v) in &self.pollutant_intensities {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{} intensity must be nonnegative, got {v}", p.as_str()));
            }
        }
        let e = &self.economics;
        for (name, v) in [
            ("construction_activity_musd", e.construction_activity_musd),
            ("construction_tax_musd", e.construction_tax_musd),
            ("salary_kusd", e.salary_kusd),
            ("operational_activity_musd", e.operational_activity_musd),
            ("operational_tax_musd", e.operational_tax_musd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Emission intensity (short tons per MWh) from permitted tonnage, the share
/// actually emitted and the energy of the permitted fleet.
pub fn derive_intensity(permitted_tons: f64, actual_share: f64, regional_energy_mwh: f64) -> f64 {
    permitted_tons * actual_share / regional_energy_mwh
}

/// Facility energy in MWh per year.
pub fn annual_energy(spec: &ProjectSpec) -> Result<f64, ImpactError> {
    spec.validate()?;
    Ok(spec.rated_capacity_mw * spec.capacity_factor * HOURS_PER_YEAR * spec.pue)
}

/// On-site cooling water and off-site generation water, in liters.
pub fn water_consumption(spec: &ProjectSpec) -> Result<(f64, f64), ImpactError> {
    let energy = annual_energy(spec)?;
    let onsite = spec.wue_l_per_kwh * (energy / spec.pue) * 1000.0;
    let offsite = spec.ewif_l_per_kwh * energy * 1000.0;
    Ok((onsite, offsite))
}

/// Million short tons of CO2 per year.
pub fn carbon_emissions(spec: &ProjectSpec) -> Result<f64, ImpactError> {
    Ok(annual_energy(spec)? * spec.state_emission_factor / 1e6)
}

/// Short tons per year of each pollutant. Unconfigured pollutants count as zero.
pub fn pollutant_emissions(spec: &ProjectSpec) -> Result<BTreeMap<Pollutant, f64>, ImpactError> {
    let energy = annual_energy(spec)?;
    Ok(Pollutant::ALL
        .iter()
        .map(|&p| (p, energy * spec.pollutant_intensities.get(&p).copied().unwrap_or(0.0)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectImpactProfile {
    pub annual_energy_mwh: f64,
    pub it_energy_mwh: f64,
    pub onsite_water_liters: f64,
    pub offsite_water_liters: f64,
    pub carbon_mst: f64,
    pub pollutants_st: BTreeMap<Pollutant, f64>,
    pub economics: Economics,
}

impl ProjectImpactProfile {
    pub fn compute(spec: &ProjectSpec) -> Result<Self, ImpactError> {
        let annual_energy_mwh = annual_energy(spec)?;
        let (onsite, offsite) = water_consumption(spec)?;
        Ok(Self {
            annual_energy_mwh,
            it_energy_mwh: annual_energy_mwh / spec.pue,
            onsite_water_liters: onsite,
            offsite_water_liters: offsite,
            carbon_mst: carbon_emissions(spec)?,
            pollutants_st: pollutant_emissions(spec)?,
            economics: spec.economics.clone(),
        })
    }

    pub fn onsite_water_ml(&self) -> f64 {
        self.onsite_water_liters / 1e6
    }

    pub fn offsite_water_ml(&self) -> f64 {
        self.offsite_water_liters / 1e6
    }
}

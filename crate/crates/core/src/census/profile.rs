use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::client::parse_number;
use super::CensusError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryShare {
    pub name: String,
    pub workers: u64,
    /// Percent of civilian employed workers.
    pub pct: f64,
}

/// County-level summary statistics rendered into the regional context.
///
/// Percentages are in [0, 100]. Values the API suppresses are `None`, and the
/// context renderer reports the placeholder that needed them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyProfile {
    pub population: u64,
    pub median_age_years: Option<f64>,
    pub male_pct: Option<f64>,
    pub female_pct: Option<f64>,
    pub white_pct: Option<f64>,
    pub black_pct: Option<f64>,
    pub american_indian_pct: Option<f64>,
    pub asian_pct: Option<f64>,
    pub pacific_islander_pct: Option<f64>,
    pub other_race_pct: Option<f64>,
    pub hispanic_pct: Option<f64>,
    pub not_hispanic_pct: Option<f64>,
    pub households: u64,
    pub avg_household_size: Option<f64>,
    pub bachelor_or_higher_pct: Option<f64>,
    pub graduate_pct: Option<f64>,
    pub computer_pct: Option<f64>,
    pub civilian_labor_force: Option<u64>,
    pub armed_forces: Option<u64>,
    pub top_industries: Vec<IndustryShare>,
    pub median_household_income_usd: Option<f64>,
    pub per_capita_income_usd: Option<f64>,
    pub occupied_units: Option<u64>,
    pub homeownership_pct: Option<f64>,
    pub median_home_value_usd: Option<f64>,
    pub median_rent_usd: Option<f64>,
}

const INDUSTRY_NAMES: [&str; 13] = [
    "Agriculture, forestry, fishing and hunting, and mining",
    "Construction",
    "Manufacturing",
    "Wholesale trade",
    "Retail trade",
    "Transportation and warehousing, and utilities",
    "Information",
    "Finance and insurance, and real estate and rental and leasing",
    "Professional, scientific, and management, and administrative and waste management services",
    "Educational services, and health care and social assistance",
    "Arts, entertainment, and recreation, and accommodation and food services",
    "Other services, except public administration",
    "Public administration",
];

fn pct(part: Option<f64>, whole: Option<f64>) -> Option<f64> {
    match (part, whole) {
        (Some(p), Some(w)) if w > 0.0 => Some(100.0 * p / w),
        _ => None,
    }
}

impl CountyProfile {
    /// Builds the profile from raw Data Profile values keyed by variable code.
    pub fn from_values(values: &HashMap<String, Option<String>>) -> Result<Self, CensusError> {
        let get = |code: &str| -> Result<Option<f64>, CensusError> {
            let raw = values.get(code).ok_or_else(|| CensusError::Schema { code: code.to_string() })?;
            parse_number(code, raw.as_deref())
        };
        let population = get("DP05_0001E")?.filter(|&p| p > 0.0).ok_or_else(|| {
            CensusError::InvalidPayload("total population must be positive".into())
        })?;
        let households = get("DP02_0001E")?.filter(|&h| h > 0.0).ok_or_else(|| {
            CensusError::InvalidPayload("total households must be positive".into())
        })?;
        let pop = Some(population);

        let attainment: Vec<Option<f64>> =
            (60..=66).map(|n| get(&format!("DP02_{n:04}E"))).collect::<Result<_, _>>()?;
        let adults_25: Option<f64> = attainment.iter().copied().sum();
        let bachelor_plus = attainment[5].zip(attainment[6]).map(|(b, g)| b + g);

        let mut industries = Vec::with_capacity(INDUSTRY_NAMES.len());
        for (i, name) in INDUSTRY_NAMES.iter().enumerate() {
            if let Some(w) = get(&format!("DP03_{:04}E", 33 + i))? {
                industries.push((name.to_string(), w as u64));
            }
        }
        let employed: u64 = industries.iter().map(|(_, w)| w).sum();
        // Stable sort keeps the ACS order among ties.
        industries.sort_by(|a, b| b.1.cmp(&a.1));
        let top_industries = industries
            .into_iter()
            .take(3)
            .map(|(name, workers)| IndustryShare {
                name,
                workers,
                pct: if employed > 0 { 100.0 * workers as f64 / employed as f64 } else { 0.0 },
            })
            .collect();

        let occupied = get("DP04_0045E")?;
        let profile = CountyProfile {
            population: population as u64,
            median_age_years: get("DP05_0018E")?,
            male_pct: pct(get("DP05_0002E")?, pop),
            female_pct: pct(get("DP05_0003E")?, pop),
            white_pct: pct(get("DP05_0069E")?, pop),
            black_pct: pct(get("DP05_0070E")?, pop),
            american_indian_pct: pct(get("DP05_0071E")?, pop),
            asian_pct: pct(get("DP05_0072E")?, pop),
            pacific_islander_pct: pct(get("DP05_0073E")?, pop),
            other_race_pct: pct(get("DP05_0074E")?, pop),
            hispanic_pct: pct(get("DP05_0076E")?, pop),
            not_hispanic_pct: pct(get("DP05_0081E")?, pop),
            households: households as u64,
            avg_household_size: get("DP02_0016E")?,
            bachelor_or_higher_pct: pct(bachelor_plus, adults_25),
            graduate_pct: pct(attainment[6], adults_25),
            computer_pct: pct(get("DP02_0153E")?, Some(households)),
            civilian_labor_force: get("DP03_0008E")?.map(|v| v as u64),
            armed_forces: get("DP03_0006E")?.map(|v| v as u64),
            top_industries,
            median_household_income_usd: get("DP03_0062E")?,
            per_capita_income_usd: get("DP03_0088E")?,
            occupied_units: occupied.map(|v| v as u64),
            homeownership_pct: pct(get("DP04_0046E")?, occupied),
            median_home_value_usd: get("DP04_0089E")?,
            median_rent_usd: get("DP04_0134E")?,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), CensusError> {
        if self.population == 0 || self.households == 0 {
            return Err(CensusError::InvalidPayload("population and households must be positive".into()));
        }
        let pcts = [
            ("male_pct", self.male_pct),
            ("female_pct", self.female_pct),
            ("white_pct", self.white_pct),
            ("black_pct", self.black_pct),
            ("american_indian_pct", self.american_indian_pct),
            ("asian_pct", self.asian_pct),
            ("pacific_islander_pct", self.pacific_islander_pct),
            ("other_race_pct", self.other_race_pct),
            ("hispanic_pct", self.hispanic_pct),
            ("not_hispanic_pct", self.not_hispanic_pct),
            ("bachelor_or_higher_pct", self.bachelor_or_higher_pct),
            ("graduate_pct", self.graduate_pct),
            ("computer_pct", self.computer_pct),
            ("homeownership_pct", self.homeownership_pct),
        ];
        for (name, v) in pcts {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    return Err(CensusError::InvalidPayload(format!("{name} = {v} outside [0, 100]")));
                }
            }
        }
        Ok(())
    }
}

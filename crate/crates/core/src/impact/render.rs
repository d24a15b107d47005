use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ImpactError, Pollutant, ProjectImpactProfile, ProjectSpec};
use crate::census::CountyProfile;
use crate::template::render_template;

/// System message shared by every agent in a run.
pub const REGIONAL_CONTEXT_TEMPLATE: &str = include_str!("../../templates/regional_context.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateContext {
    pub state_name: String,
    pub year: u16,
    /// Annual electricity use of all data centers in the state.
    pub dc_energy_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalContext {
    pub state: StateContext,
    pub county_name: String,
    pub county_profile: CountyProfile,
    pub impact: ProjectImpactProfile,
    pub rendered_text: String,
}

/// Rounds to `decimals` places and groups the integer part by thousands.
pub fn format_fixed(value: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, value.abs());
    let (int, frac) = match s.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (s.as_str(), None),
    };
    let mut grouped = String::with_capacity(int.len() + int.len() / 3);
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    let zero = s.bytes().all(|b| b == b'0' || b == b'.');
    let mut out = if value < 0.0 && !zero { String::from("-") } else { String::new() };
    out.push_str(&grouped);
    if let Some(f) = frac {
        out.push('.');
        out.push_str(f);
    }
    out
}

/// Like [`format_fixed`] with trailing fractional zeros removed.
pub fn format_trimmed(value: f64, max_decimals: usize) -> String {
    let s = format_fixed(value, max_decimals);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn pct(v: Option<f64>) -> Option<String> {
    v.map(|p| format_fixed(p, 1))
}

fn profile_values(county_name: &str, p: &CountyProfile) -> Vec<(&'static str, Option<String>)> {
    let industries = match p.top_industries.len() {
        0 => None,
        n => {
            let parts: Vec<String> =
                p.top_industries.iter().map(|s| format!("{} ({}%)", s.name, format_fixed(s.pct, 1))).collect();
            Some(match n {
                1 => parts[0].clone(),
                2 => format!("{}; and {}", parts[0], parts[1]),
                _ => format!("{}; and {}", parts[..n - 1].join("; "), parts[n - 1]),
            })
        }
    };
    vec![
        ("COUNTY_NAME", Some(county_name.to_string())),
        ("POPULATION", Some(format_fixed(p.population as f64, 0))),
        ("FEMALE_PCT", pct(p.female_pct)),
        ("MALE_PCT", pct(p.male_pct)),
        ("MEDIAN_AGE", p.median_age_years.map(|v| format_fixed(v, 1))),
        ("WHITE_PCT", pct(p.white_pct)),
        ("ASIAN_PCT", pct(p.asian_pct)),
        ("BLACK_PCT", pct(p.black_pct)),
        ("HISPANIC_PCT", pct(p.hispanic_pct)),
        ("TOTAL_HOUSEHOLDS", Some(format_fixed(p.households as f64, 0))),
        ("AVG_HOUSEHOLD_SIZE", p.avg_household_size.map(|v| format_fixed(v, 2))),
        ("BACHELOR_OR_HIGHER_PCT", pct(p.bachelor_or_higher_pct)),
        ("GRADUATE_PCT", pct(p.graduate_pct)),
        ("COMPUTER_PCT", pct(p.computer_pct)),
        ("MEDIAN_HOUSEHOLD_INCOME", p.median_household_income_usd.map(|v| format_fixed(v, 0))),
        ("PER_CAPITA_INCOME", p.per_capita_income_usd.map(|v| format_fixed(v, 0))),
        ("TOP_INDUSTRIES", industries),
        ("HOMEOWNERSHIP_RATE", pct(p.homeownership_pct)),
        ("MEDIAN_HOME_VALUE", p.median_home_value_usd.map(|v| format_fixed(v, 0))),
        ("MEDIAN_RENT", p.median_rent_usd.map(|v| format_fixed(v, 0))),
    ]
}

fn impact_values(i: &ProjectImpactProfile) -> Vec<(&'static str, Option<String>)> {
    let e = &i.economics;
    let tons = |p: Pollutant| i.pollutants_st.get(&p).map(|v| format_fixed(*v, 2));
    vec![
        ("YEARLY_ENERGY_CONSUMPTION", Some(format_fixed(i.annual_energy_mwh, 0))),
        ("CONSTRUCTION_DURATION", Some(e.construction_duration_months.clone())),
        ("CONSTRUCTION_JOBS", Some(format_fixed(e.construction_jobs as f64, 0))),
        ("CONSTRUCTION_ECONOMIC_ACTIVITY", Some(format_trimmed(e.construction_activity_musd, 2))),
        ("CONSTRUCTION_TAX", Some(format_trimmed(e.construction_tax_musd, 2))),
        ("OPERATIONAL_JOBS", Some(format_fixed(e.operational_jobs as f64, 0))),
        ("SALARY", Some(format_trimmed(e.salary_kusd, 1))),
        ("OPERATIONAL_ECONOMIC_ACTIVITY", Some(format_trimmed(e.operational_activity_musd, 2))),
        ("OPERATIONAL_TAX", Some(format_trimmed(e.operational_tax_musd, 2))),
        ("ONSITE_WATER", Some(format_fixed(i.onsite_water_ml(), 2))),
        ("OFFSITE_WATER", Some(format_fixed(i.offsite_water_ml(), 2))),
        ("CARBON_EMISSIONS", Some(format_fixed(i.carbon_mst, 3))),
        ("NOX", tons(Pollutant::Nox)),
        ("VOCS", tons(Pollutant::Vocs)),
        ("PM25", tons(Pollutant::Pm25)),
        ("SO2", tons(Pollutant::So2)),
    ]
}

/// Computes the project impact and fills the regional context template.
pub fn build_regional_context(
    spec: &ProjectSpec,
    county_name: &str,
    county_profile: &CountyProfile,
    state: &StateContext,
) -> Result<RegionalContext, ImpactError> {
    let impact = ProjectImpactProfile::compute(spec)?;
    let mut values = BTreeMap::new();
    let state_values = vec![
        ("STATE_NAME", Some(state.state_name.clone())),
        ("YEAR", Some(state.year.to_string())),
        ("ENERGY_CONSUMPTION", Some(format_fixed(state.dc_energy_mwh, 0))),
    ];
    for (k, v) in state_values.into_iter().chain(profile_values(county_name, county_profile)).chain(impact_values(&impact))
    {
        // Absent values stay out of the map so rendering names them.
        if let Some(v) = v {
            values.insert(k, v);
        }
    }
    let rendered_text = render_template(REGIONAL_CONTEXT_TEMPLATE, &values)
        .map_err(|placeholder| ImpactError::MissingValue { placeholder })?;
    Ok(RegionalContext {
        state: state.clone(),
        county_name: county_name.to_string(),
        county_profile: county_profile.clone(),
        impact,
        rendered_text,
    })
}

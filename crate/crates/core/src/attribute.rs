use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the twelve demographic attributes carried by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    AgeGroup,
    Sex,
    Race,
    Ethnicity,
    Citizenship,
    LanguageAtHome,
    EmploymentStatus,
    HouseholdIncome,
    Housing,
    Vehicles,
    MaritalStatus,
    EducationLevel,
}

impl Attribute {
    /// Agent record order: the ten fitted dimensions, then the two assigned afterwards.
    pub const ALL: [Attribute; 12] = [
        Attribute::AgeGroup,
        Attribute::Sex,
        Attribute::Race,
        Attribute::Ethnicity,
        Attribute::Citizenship,
        Attribute::LanguageAtHome,
        Attribute::EmploymentStatus,
        Attribute::HouseholdIncome,
        Attribute::Housing,
        Attribute::Vehicles,
        Attribute::MaritalStatus,
        Attribute::EducationLevel,
    ];

    /// Dimensions fitted jointly, in update order: social, economic, housing, demographic.
    pub const IPF_ORDER: [Attribute; 10] = [
        Attribute::LanguageAtHome,
        Attribute::Citizenship,
        Attribute::EmploymentStatus,
        Attribute::HouseholdIncome,
        Attribute::Housing,
        Attribute::Vehicles,
        Attribute::AgeGroup,
        Attribute::Sex,
        Attribute::Race,
        Attribute::Ethnicity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Attribute::AgeGroup => "age_group",
            Attribute::Sex => "sex",
            Attribute::Race => "race",
            Attribute::Ethnicity => "ethnicity",
            Attribute::Citizenship => "citizenship",
            Attribute::LanguageAtHome => "language_at_home",
            Attribute::EmploymentStatus => "employment_status",
            Attribute::HouseholdIncome => "household_income",
            Attribute::Housing => "housing",
            Attribute::Vehicles => "vehicles",
            Attribute::MaritalStatus => "marital_status",
            Attribute::EducationLevel => "education_level",
        }
    }

    /// Human-readable name used in fit reports.
    pub fn display_name(self) -> &'static str {
        match self {
            Attribute::AgeGroup => "Age Group",
            Attribute::Sex => "Sex",
            Attribute::Race => "Race",
            Attribute::Ethnicity => "Ethnicity",
            Attribute::Citizenship => "Citizenship",
            Attribute::LanguageAtHome => "Language at Home",
            Attribute::EmploymentStatus => "Employment Status",
            Attribute::HouseholdIncome => "Household Income",
            Attribute::Housing => "Housing",
            Attribute::Vehicles => "Vehicles",
            Attribute::MaritalStatus => "Marital Status",
            Attribute::EducationLevel => "Education Level",
        }
    }

    pub fn is_ipf_dimension(self) -> bool {
        !matches!(self, Attribute::MaritalStatus | Attribute::EducationLevel)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown attribute `{s}`"))
    }
}

/// Lower bound in years of an ACS age label such as "20 to 24 years",
/// "Under 5 years" or "85 years and over".
pub fn age_lower_bound(label: &str) -> Option<u32> {
    let label = label.trim();
    if label.starts_with("Under ") {
        return Some(0);
    }
    label.split_whitespace().next()?.parse().ok()
}

/// Whether every person in the age category is at least 18.
pub fn is_adult_age(label: &str) -> bool {
    age_lower_bound(label).is_some_and(|lo| lo >= 18)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn age_bounds() {
        assert_eq!(age_lower_bound("Under 5 years"), Some(0));
        assert_eq!(age_lower_bound("15 to 19 years"), Some(15));
        assert_eq!(age_lower_bound("18 to 19 years"), Some(18));
        assert_eq!(age_lower_bound("85 years and over"), Some(85));
        assert_eq!(age_lower_bound("teen"), None);
        assert!(!is_adult_age("15 to 19 years"));
        assert!(is_adult_age("18 to 19 years"));
    }

    #[test]
    fn attribute_names_round_trip() {
        for a in Attribute::ALL {
            assert_eq!(a.as_str().parse::<Attribute>().unwrap(), a);
        }
        assert_eq!(Attribute::IPF_ORDER.iter().filter(|a| a.is_ipf_dimension()).count(), 10);
    }
}

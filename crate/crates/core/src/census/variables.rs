//! ACS 5-year Data Profile variable codes used for agent construction and
//! county profiling.

use serde::{Deserialize, Serialize};

use super::CensusError;
use crate::attribute::Attribute;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcsGroup {
    Demographic,
    Social,
    Economic,
    Housing,
}

/// An ordered list of profile codes paired with category labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcsVariableSet {
    group: AcsGroup,
    variable_codes: Vec<String>,
    category_labels: Vec<String>,
}

/// True for codes shaped like `DP05_0005E`.
pub fn is_profile_code(code: &str) -> bool {
    let b = code.as_bytes();
    b.len() == 10
        && &b[..2] == b"DP"
        && b[2].is_ascii_digit()
        && b[3].is_ascii_digit()
        && b[4] == b'_'
        && b[5..9].iter().all(u8::is_ascii_digit)
        && b[9] == b'E'
}

impl AcsVariableSet {
    pub fn new<C, L>(group: AcsGroup, codes: C, labels: L) -> Result<Self, CensusError>
    where
        C: IntoIterator,
        C::Item: Into<String>,
        L: IntoIterator,
        L::Item: Into<String>,
    {
        let variable_codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        let category_labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if variable_codes.is_empty() || variable_codes.len() != category_labels.len() {
            return Err(CensusError::InvalidVariableSet(format!(
                "{} codes for {} labels",
                variable_codes.len(),
                category_labels.len()
            )));
        }
        if let Some(bad) = variable_codes.iter().find(|c| !is_profile_code(c)) {
            return Err(CensusError::InvalidVariableSet(format!("malformed code `{bad}`")));
        }
        Ok(Self { group, variable_codes, category_labels })
    }

    pub fn group(&self) -> AcsGroup {
        self.group
    }

    pub fn codes(&self) -> &[String] {
        &self.variable_codes
    }

    pub fn labels(&self) -> &[String] {
        &self.category_labels
    }

    pub fn len(&self) -> usize {
        self.variable_codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variable_codes.is_empty()
    }
}

/// Which table of an attribute a variable set feeds. Marital status is
/// split by sex and education by age band, so those attributes have two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableRole {
    Marginal,
    MaleMarital,
    FemaleMarital,
    Attainment,
    Enrollment,
}

/// A variable set bound to the agent attribute it describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub attribute: Attribute,
    pub role: TableRole,
    pub variables: AcsVariableSet,
}

fn codes(prefix: &str, range: std::ops::RangeInclusive<u32>) -> Vec<String> {
    range.map(|n| format!("{prefix}_{n:04}E")).collect()
}

fn spec(attribute: Attribute, role: TableRole, group: AcsGroup, codes: Vec<String>, labels: &[&str]) -> MarginalSpec {
    MarginalSpec {
        attribute,
        role,
        variables: AcsVariableSet::new(group, codes, labels.iter().copied())
            .expect("built-in variable set is well formed"),
    }
}

pub const AGE_LABELS: [&str; 13] = [
    "Under 5 years",
    "5 to 9 years",
    "10 to 14 years",
    "15 to 19 years",
    "20 to 24 years",
    "25 to 34 years",
    "35 to 44 years",
    "45 to 54 years",
    "55 to 59 years",
    "60 to 64 years",
    "65 to 74 years",
    "75 to 84 years",
    "85 years and over",
];

pub const MARITAL_LABELS: [&str; 5] = ["Never Married", "Married", "Separated", "Widowed", "Divorced"];

pub const ENROLLED: &str = "Attending some college or graduate school";
pub const NOT_ENROLLED: &str = "Not attending any college";

/// The built-in variable sets: one per fitted dimension, two marital tables
/// (male, female), educational attainment and the raw inputs for the
/// 18 to 24 enrollment table.
pub fn standard_marginal_specs() -> Vec<MarginalSpec> {
    use AcsGroup::*;
    use Attribute as A;
    use TableRole::*;
    let race_codes: Vec<String> = [37, 38, 39, 44, 45, 46, 47, 48, 49, 50, 52, 53, 54, 55, 57, 58]
        .iter()
        .map(|n| format!("DP05_{n:04}E"))
        .collect();
    let mut industry_codes = codes("DP03", 33..=45);
    industry_codes.extend(codes("DP03", 5..=7));
    let mut housing_codes = codes("DP04", 81..=88);
    housing_codes.extend(codes("DP04", 127..=133));
    housing_codes.push("DP04_0135E".into());
    vec![
        spec(A::AgeGroup, Marginal, Demographic, codes("DP05", 5..=17), &AGE_LABELS),
        spec(A::Sex, Marginal, Demographic, codes("DP05", 2..=3), &["Male", "Female"]),
        spec(
            A::Race,
            Marginal,
            Demographic,
            race_codes,
            &[
                "White",
                "Black or African American",
                "American Indian and Alaska Native",
                "Asian Indian",
                "Chinese",
                "Filipino",
                "Japanese",
                "Korean",
                "Vietnamese",
                "Other Asian",
                "Native Hawaiian",
                "Chamorro",
                "Samoan",
                "Other Pacific Islander",
                "Some other race",
                "Two or more races",
            ],
        ),
        spec(
            A::Ethnicity,
            Marginal,
            Demographic,
            vec!["DP05_0076E".into(), "DP05_0081E".into()],
            &["Hispanic", "Non-Hispanic"],
        ),
        spec(
            A::Citizenship,
            Marginal,
            Social,
            ["DP02_0091E", "DP02_0092E", "DP02_0093E", "DP02_0096E", "DP02_0097E"]
                .map(String::from)
                .to_vec(),
            &[
                "Native - born in state of residence",
                "Native - born in different state",
                "Native - born in Puerto Rico, U.S. Island areas, or abroad to American parent(s)",
                "Foreign born - naturalized U.S. citizen",
                "Foreign born - not a U.S. citizen",
            ],
        ),
        spec(
            A::LanguageAtHome,
            Marginal,
            Social,
            ["DP02_0113E", "DP02_0116E", "DP02_0118E", "DP02_0120E", "DP02_0122E"]
                .map(String::from)
                .to_vec(),
            &[
                "English only",
                "Spanish",
                "Other Indo-European languages",
                "Asian and Pacific Islander languages",
                "Other languages",
            ],
        ),
        spec(
            A::EmploymentStatus,
            Marginal,
            Economic,
            industry_codes,
            &[
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
                "Unemployed",
                "Armed Forces",
                "Not in labor force",
            ],
        ),
        spec(
            A::HouseholdIncome,
            Marginal,
            Economic,
            codes("DP03", 52..=61),
            &[
                "Less than $10,000",
                "$10,000 to $14,999",
                "$15,000 to $24,999",
                "$25,000 to $34,999",
                "$35,000 to $49,999",
                "$50,000 to $74,999",
                "$75,000 to $99,999",
                "$100,000 to $149,999",
                "$150,000 to $199,999",
                "$200,000 or more",
            ],
        ),
        spec(
            A::Housing,
            Marginal,
            Housing,
            housing_codes,
            &[
                "Owner-occupied: Less than $50,000",
                "Owner-occupied: $50,000 to $99,999",
                "Owner-occupied: $100,000 to $149,999",
                "Owner-occupied: $150,000 to $199,999",
                "Owner-occupied: $200,000 to $299,999",
                "Owner-occupied: $300,000 to $499,999",
                "Owner-occupied: $500,000 to $999,999",
                "Owner-occupied: $1,000,000 or more",
                "Rent: Less than $500",
                "Rent: $500 to $999",
                "Rent: $1,000 to $1,499",
                "Rent: $1,500 to $1,999",
                "Rent: $2,000 to $2,499",
                "Rent: $2,500 to $2,999",
                "Rent: $3,000 or more",
                "Rent: No rent paid",
            ],
        ),
        spec(
            A::Vehicles,
            Marginal,
            Housing,
            codes("DP04", 58..=61),
            &["No vehicles available", "1 vehicle available", "2 vehicles available", "3 or more vehicles available"],
        ),
        spec(A::MaritalStatus, MaleMarital, Social, codes("DP02", 26..=30), &MARITAL_LABELS),
        spec(A::MaritalStatus, FemaleMarital, Social, codes("DP02", 32..=36), &MARITAL_LABELS),
        spec(
            A::EducationLevel,
            Attainment,
            Social,
            codes("DP02", 60..=66),
            &[
                "Less than 9th grade",
                "9th to 12th grade, no diploma",
                "High school graduate (includes equivalency)",
                "Some college, no degree",
                "Associate's degree",
                "Bachelor's degree",
                "Graduate or professional degree",
            ],
        ),
        spec(
            A::EducationLevel,
            Enrollment,
            Social,
            vec!["DP02_0058E".into(), "DP05_0008E".into(), "DP05_0009E".into()],
            &["College or graduate school", "15 to 19 years", "20 to 24 years"],
        ),
    ]
}

/// Variable sets backing the county profile, one request per group.
pub fn county_profile_sets() -> Vec<AcsVariableSet> {
    let mk = |group, codes: Vec<String>, labels: Vec<&str>| {
        AcsVariableSet::new(group, codes, labels).expect("built-in variable set is well formed")
    };
    let mut social = vec!["DP02_0001E".to_string(), "DP02_0016E".to_string()];
    social.extend(codes("DP02", 60..=66));
    social.push("DP02_0153E".into());
    let mut economic = vec!["DP03_0008E".to_string()];
    economic.extend(codes("DP03", 33..=45));
    economic.extend(["DP03_0006E", "DP03_0062E", "DP03_0088E"].map(String::from));
    vec![
        mk(
            AcsGroup::Demographic,
            ["0001", "0002", "0003", "0018", "0069", "0070", "0071", "0072", "0073", "0074", "0076", "0081"]
                .iter()
                .map(|n| format!("DP05_{n}E"))
                .collect(),
            vec![
                "Total population",
                "Male",
                "Female",
                "Median age",
                "White",
                "Black or African American",
                "American Indian and Alaska Native",
                "Asian",
                "Native Hawaiian and Other Pacific Islander",
                "Other race",
                "Hispanic or Latino",
                "Not Hispanic or Latino",
            ],
        ),
        mk(
            AcsGroup::Social,
            social,
            vec![
                "Total households",
                "Average household size",
                "Less than 9th grade",
                "9th to 12th grade, no diploma",
                "High school graduate (includes equivalency)",
                "Some college, no degree",
                "Associate's degree",
                "Bachelor's degree",
                "Graduate or professional degree",
                "Households with a computer",
            ],
        ),
        mk(
            AcsGroup::Economic,
            economic,
            vec![
                "Civilian labor force",
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
                "Armed forces",
                "Median household income",
                "Per capita income",
            ],
        ),
        mk(
            AcsGroup::Housing,
            ["DP04_0045E", "DP04_0046E", "DP04_0047E", "DP04_0089E", "DP04_0134E"].map(String::from).to_vec(),
            vec![
                "Occupied housing units",
                "Owner-occupied units",
                "Renter-occupied units",
                "Median home value",
                "Median gross rent",
            ],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn code_pattern() {
        assert!(is_profile_code("DP05_0005E"));
        assert!(is_profile_code("DP99_9999E"));
        assert!(!is_profile_code("DP05_005E"));
        assert!(!is_profile_code("B01001_001E"));
        assert!(!is_profile_code("DP05_0005M"));
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(AcsVariableSet::new(AcsGroup::Social, ["DP02_0001E"], Vec::<String>::new()).is_err());
        assert!(AcsVariableSet::new(AcsGroup::Social, Vec::<String>::new(), Vec::<String>::new()).is_err());
        assert!(AcsVariableSet::new(AcsGroup::Social, ["DP2_0001E"], ["x"]).is_err());
    }

    #[test]
    fn standard_specs_cover_all_twelve_attributes() {
        let specs = standard_marginal_specs();
        let attrs: BTreeSet<_> = specs.iter().map(|s| s.attribute).collect();
        assert_eq!(attrs.len(), 12);
        let age = &specs[0];
        assert_eq!(age.variables.len(), 13);
        assert_eq!(age.variables.codes()[0], "DP05_0005E");
        assert_eq!(age.variables.codes()[12], "DP05_0017E");
        assert_eq!(age.variables.labels()[12], "85 years and over");
        for s in &specs {
            let uniq: BTreeSet<_> = s.variables.codes().iter().collect();
            assert_eq!(uniq.len(), s.variables.len(), "{:?}", s.attribute);
        }
    }
}

use serde::{Deserialize, Serialize};

use super::variables::{TableRole, ENROLLED, NOT_ENROLLED};
use super::CensusError;
use crate::attribute::Attribute;

/// Category counts along one demographic dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct MarginalTable {
    dimension: Attribute,
    role: TableRole,
    categories: Vec<String>,
    counts: Vec<u64>,
    total: u64,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    dimension: Attribute,
    role: TableRole,
    categories: Vec<String>,
    counts: Vec<u64>,
    total: u64,
}

impl TryFrom<TableRepr> for MarginalTable {
    type Error = CensusError;

    fn try_from(r: TableRepr) -> Result<Self, Self::Error> {
        let t = MarginalTable::with_role(r.dimension, r.role, r.categories, r.counts)?;
        if t.total != r.total {
            return Err(CensusError::InvalidTable(format!(
                "{}: total {} does not equal sum of counts {}",
                r.dimension, r.total, t.total
            )));
        }
        Ok(t)
    }
}

impl From<MarginalTable> for TableRepr {
    fn from(t: MarginalTable) -> Self {
        TableRepr { dimension: t.dimension, role: t.role, categories: t.categories, counts: t.counts, total: t.total }
    }
}

impl MarginalTable {
    pub fn new(dimension: Attribute, categories: Vec<String>, counts: Vec<u64>) -> Result<Self, CensusError> {
        Self::with_role(dimension, TableRole::Marginal, categories, counts)
    }

    pub fn with_role(
        dimension: Attribute,
        role: TableRole,
        categories: Vec<String>,
        counts: Vec<u64>,
    ) -> Result<Self, CensusError> {
        if categories.is_empty() || categories.len() != counts.len() {
            return Err(CensusError::InvalidTable(format!(
                "{dimension}: {} categories for {} counts",
                categories.len(),
                counts.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = categories.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(CensusError::InvalidTable(format!("{dimension}: duplicate category `{dup}`")));
        }
        let total = counts.iter().sum();
        Ok(Self { dimension, role, categories, counts, total })
    }

    pub fn dimension(&self) -> Attribute {
        self.dimension
    }

    pub fn role(&self) -> TableRole {
        self.role
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn index_of(&self, category: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == category)
    }

    pub fn count_of(&self, category: &str) -> Option<u64> {
        self.index_of(category).map(|i| self.counts[i])
    }

    /// Counts divided by the total. All zeros when the total is zero.
    pub fn proportions(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// Keeps only the categories matching `keep`, in order.
    pub fn filtered(&self, mut keep: impl FnMut(&str) -> bool) -> Result<Self, CensusError> {
        let (cats, counts): (Vec<_>, Vec<_>) = self
            .categories
            .iter()
            .zip(&self.counts)
            .filter(|(c, _)| keep(c))
            .map(|(c, &n)| (c.clone(), n))
            .unzip();
        Self::with_role(self.dimension, self.role, cats, counts)
    }

    /// The age table restricted to categories whose members are all adults.
    pub fn adult_only(&self) -> Result<Self, CensusError> {
        self.filtered(crate::attribute::is_adult_age)
    }
}

pub const TEEN_BRACKET: &str = "15 to 19 years";
pub const ADULT_TEEN_BRACKET: &str = "18 to 19 years";

/// Result of splitting the 15 to 19 age bracket.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionOutcome {
    pub table: MarginalTable,
    /// False when the table had no "15 to 19 years" category; the table is then unchanged.
    pub partitioned: bool,
}

/// Two fifths of `count`, rounded half up.
pub fn two_fifths_half_up(count: u64) -> u64 {
    (4 * count + 5) / 10
}

/// Replaces "15 to 19 years" by "18 to 19 years", keeping two fifths of the
/// bracket under a uniform-within-bracket assumption. The remaining three
/// fifths leave the table and its total.
pub fn partition_age_bracket(table: &MarginalTable) -> PartitionOutcome {
    let Some(i) = table.index_of(TEEN_BRACKET) else {
        log::warn!("{}: no `{TEEN_BRACKET}` bracket to partition", table.dimension);
        return PartitionOutcome { table: table.clone(), partitioned: false };
    };
    let mut categories = table.categories.clone();
    let mut counts = table.counts.clone();
    categories[i] = ADULT_TEEN_BRACKET.to_string();
    counts[i] = two_fifths_half_up(counts[i]);
    let table = MarginalTable::with_role(table.dimension, table.role, categories, counts)
        .expect("relabelling keeps the table well formed");
    PartitionOutcome { table, partitioned: true }
}

/// Builds the two-category 18 to 24 enrollment table from the raw enrollment
/// request: college enrollment, then the 15 to 19 and 20 to 24 age counts.
/// College enrollment counts people of every age, so it is capped at the
/// 18 to 24 population.
pub fn derive_enrollment_table(raw: &MarginalTable) -> Result<MarginalTable, CensusError> {
    if raw.len() != 3 {
        return Err(CensusError::InvalidTable(format!(
            "enrollment inputs need 3 counts, found {}",
            raw.len()
        )));
    }
    let enrolled = raw.counts[0];
    let population = two_fifths_half_up(raw.counts[1]) + raw.counts[2];
    let attending = enrolled.min(population);
    MarginalTable::with_role(
        Attribute::EducationLevel,
        TableRole::Enrollment,
        vec![ENROLLED.to_string(), NOT_ENROLLED.to_string()],
        vec![attending, population - attending],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn age(counts: &[u64]) -> MarginalTable {
        let labels = ["Under 5 years", "10 to 14 years", "15 to 19 years", "20 to 24 years"];
        MarginalTable::new(Attribute::AgeGroup, labels.map(String::from).to_vec(), counts.to_vec()).unwrap()
    }

    #[test]
    fn partition_keeps_two_fifths() {
        let out = partition_age_bracket(&age(&[10, 10, 1000, 50]));
        assert!(out.partitioned);
        assert_eq!(out.table.count_of("18 to 19 years"), Some(400));
        assert_eq!(out.table.count_of("15 to 19 years"), None);
        assert_eq!(out.table.total(), 10 + 10 + 400 + 50);
        assert_eq!(out.table.counts().iter().sum::<u64>(), out.table.total());
    }

    #[test]
    fn partition_rounds_half_up() {
        // 3 * 2 / 5 = 1.2
        assert_eq!(partition_age_bracket(&age(&[0, 0, 3, 0])).table.count_of("18 to 19 years"), Some(1));
        // 4 * 2 / 5 = 1.6
        assert_eq!(two_fifths_half_up(4), 2);
        assert_eq!(two_fifths_half_up(1), 0);
        assert_eq!(two_fifths_half_up(2), 1);
    }

    #[test]
    fn partition_zero_bracket_keeps_category() {
        let out = partition_age_bracket(&age(&[5, 5, 0, 5]));
        assert!(out.partitioned);
        assert_eq!(out.table.count_of("18 to 19 years"), Some(0));
    }

    #[test]
    fn partition_without_bracket_is_noop() {
        let t = MarginalTable::new(Attribute::AgeGroup, vec!["25 to 34 years".into()], vec![7]).unwrap();
        let out = partition_age_bracket(&t);
        assert!(!out.partitioned);
        assert_eq!(out.table, t);
    }

    #[test]
    fn adult_filter() {
        let t = partition_age_bracket(&age(&[10, 10, 1000, 50])).table.adult_only().unwrap();
        assert_eq!(t.categories(), ["18 to 19 years", "20 to 24 years"]);
        assert_eq!(t.total(), 450);
    }

    #[test]
    fn enrollment_derivation_caps_attending() {
        let raw = MarginalTable::with_role(
            Attribute::EducationLevel,
            TableRole::Enrollment,
            vec!["a".into(), "b".into(), "c".into()],
            vec![300, 1000, 500],
        )
        .unwrap();
        let t = derive_enrollment_table(&raw).unwrap();
        assert_eq!(t.counts(), [300, 600]);
        let raw = MarginalTable::with_role(
            Attribute::EducationLevel,
            TableRole::Enrollment,
            vec!["a".into(), "b".into(), "c".into()],
            vec![5000, 1000, 500],
        )
        .unwrap();
        assert_eq!(derive_enrollment_table(&raw).unwrap().counts(), [900, 0]);
    }

    #[test]
    fn serde_rejects_bad_total() {
        let json = r#"{"dimension":"sex","role":"marginal","categories":["Male","Female"],"counts":[1,2],"total":4}"#;
        assert!(serde_json::from_str::<MarginalTable>(json).is_err());
        let json = r#"{"dimension":"sex","role":"marginal","categories":["Male","Female"],"counts":[1,2],"total":3}"#;
        assert!(serde_json::from_str::<MarginalTable>(json).is_ok());
    }
}

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::agent::AgentProfile;
use super::stats::{chi_square_statistic, merge_small_bins};
use super::SynthError;
use crate::attribute::Attribute;
use crate::census::MarginalTable;

/// Bins with expected count below this are merged before testing.
pub const MIN_EXPECTED: f64 = 5.0;

/// Chi-square goodness of fit for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dimension: Attribute,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub pass: bool,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// Observed category counts of `attribute` among `agents`, in table order.
pub fn observed_counts(agents: &[AgentProfile], table: &MarginalTable) -> Result<Vec<f64>, SynthError> {
    let mut counts = vec![0.0; table.len()];
    for a in agents {
        let v = a.get(table.dimension()).ok_or_else(|| {
            SynthError::Domain(format!("{} has no {}", a.agent_id, table.dimension()))
        })?;
        let i = table.index_of(v).ok_or_else(|| {
            SynthError::Domain(format!("{}: `{v}` is not a {} category", a.agent_id, table.dimension()))
        })?;
        counts[i] += 1.0;
    }
    Ok(counts)
}

/// Tests each target dimension against census-expected counts scaled to the
/// population size. The age table is restricted to adult categories first.
pub fn verify_population(
    agents: &[AgentProfile],
    targets: &[MarginalTable],
    alpha: f64,
) -> Result<Vec<FitReport>, SynthError> {
    if agents.len() < 30 {
        return Err(SynthError::Precondition(format!(
            "chi-square verification needs at least 30 agents, got {}",
            agents.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SynthError::Config(format!("significance level {alpha} outside (0, 1)")));
    }
    let n = agents.len() as f64;
    targets
        .iter()
        .map(|table| {
            let table =
                if table.dimension() == Attribute::AgeGroup { table.adult_only()? } else { table.clone() };
            if table.total() == 0 {
                return Err(SynthError::Domain(format!("{}: expected counts are all zero", table.dimension())));
            }
            let expected: Vec<f64> = table.proportions().iter().map(|p| p * n).collect();
            let observed = observed_counts(agents, &table)?;
            let bins = merge_small_bins(&observed, &expected, MIN_EXPECTED);
            let (chi_square, df, p_value) = chi_square_statistic(&bins.observed, &bins.expected);
            Ok(FitReport {
                dimension: table.dimension(),
                chi_square,
                degrees_of_freedom: df,
                p_value,
                alpha,
                pass: p_value > alpha,
                observed: bins.observed,
                expected: bins.expected,
            })
        })
        .collect()
}

/// Plain-text table in the layout of a goodness-of-fit results table.
pub fn format_fit_table(reports: &[FitReport]) -> String {
    let alpha = reports.first().map_or(0.05, |r| r.alpha);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>16} {:>18} {:>8}  Result (at alpha={alpha})",
        "Demographic Attribute", "Chi-square", "Degree of Freedom", "P-value"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<22} {:>16.4} {:>18} {:>8.4}  {}",
            r.dimension.display_name(),
            r.chi_square,
            r.degrees_of_freedom,
            r.p_value,
            if r.pass { "Fail to reject H0" } else { "Reject H0" }
        );
    }
    out
}

//! Chi-square routines cross-checked against statrs and the textbook formula.

use communitypoll_core::attribute::Attribute;
use communitypoll_core::census::MarginalTable;
use communitypoll_core::synth::stats::{chi_square_sf, merge_small_bins};
use communitypoll_core::synth::{verify_population, AgentProfile, MIN_EXPECTED};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn survival_function_matches_statrs() {
    for df in 1..=30usize {
        let dist = ChiSquared::new(df as f64).unwrap();
        for &x in &[0.01, 0.3, 1.0, 2.5, 5.0, 9.0, 15.0, 27.0, 44.0, 80.0] {
            let ours = chi_square_sf(x, df);
            let theirs = dist.sf(x);
            assert!((ours - theirs).abs() < 1e-10, "df={df} x={x}: {ours} vs {theirs}");
        }
    }
}

#[test]
fn published_table_values() {
    // Upper 5% and 1% points of the chi-square distribution.
    for (x, df, p) in [(3.841, 1, 0.05), (5.991, 2, 0.05), (11.070, 5, 0.05), (6.635, 1, 0.01), (23.209, 10, 0.01)] {
        assert!((chi_square_sf(x, df) - p).abs() < 2e-4, "df={df}");
    }
}

fn population(cats: &[&str], counts: &[usize]) -> Vec<AgentProfile> {
    let mut out = Vec::new();
    for (c, &k) in cats.iter().zip(counts) {
        for _ in 0..k {
            let mut a = AgentProfile::new(format!("agent-{:04}", out.len() + 1));
            a.set(Attribute::Vehicles, *c);
            out.push(a);
        }
    }
    out
}

proptest! {
    #[test]
    fn verification_matches_textbook(
        obs in prop::collection::vec(0usize..60, 4),
        census in prop::collection::vec(1u64..500, 4),
    ) {
        prop_assume!(obs.iter().sum::<usize>() >= 30);
        let cats = ["None", "One", "Two", "Three+"];
        let table = MarginalTable::new(Attribute::Vehicles, cats.map(String::from).to_vec(), census.clone()).unwrap();
        let agents = population(&cats, &obs);
        let report = &verify_population(&agents, &[table], 0.05).unwrap()[0];

        let n = agents.len() as f64;
        let total: u64 = census.iter().sum();
        let expected: Vec<f64> = census.iter().map(|&c| c as f64 / total as f64 * n).collect();
        let observed: Vec<f64> = obs.iter().map(|&o| o as f64).collect();
        let bins = merge_small_bins(&observed, &expected, MIN_EXPECTED);
        let mut stat = 0.0;
        for (o, e) in bins.observed.iter().zip(&bins.expected) {
            stat += (o - e).powi(2) / e;
        }
        let df = bins.observed.len() - 1;
        prop_assert!((report.chi_square - stat).abs() < 1e-9);
        prop_assert_eq!(report.degrees_of_freedom, df);
        if df > 0 {
            let p = ChiSquared::new(df as f64).unwrap().sf(stat);
            prop_assert!((report.p_value - p).abs() < 1e-6);
        }
        prop_assert_eq!(report.pass, report.p_value > 0.05);
        prop_assert!(bins.expected.len() == 1 || bins.expected.iter().all(|&e| e >= MIN_EXPECTED));
    }
}

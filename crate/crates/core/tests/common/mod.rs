#![allow(dead_code)]

use std::path::PathBuf;

use communitypoll_core::census::{CensusClient, CountyMarginals, CountyProfile, FetchMode, DEFAULT_YEAR};

pub const TAYLOR_STATE: &str = "48";
pub const TAYLOR_COUNTY: &str = "441";

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn offline_client() -> CensusClient {
    CensusClient::new(DEFAULT_YEAR, fixture_dir().join("census"), FetchMode::Offline)
}

pub fn taylor_marginals() -> CountyMarginals {
    offline_client().fetch_county_marginals(TAYLOR_STATE, TAYLOR_COUNTY).expect("Taylor fixtures load")
}

pub fn taylor_profile() -> CountyProfile {
    offline_client().fetch_county_profile(TAYLOR_STATE, TAYLOR_COUNTY).expect("Taylor profile loads")
}

use communitypoll_core::impact::{build_regional_context, ProjectSpec, RegionalContext, StateContext};

pub fn texas() -> StateContext {
    StateContext { state_name: "Texas".into(), year: 2023, dc_energy_mwh: 21_800_000.0 }
}

pub fn taylor_context() -> RegionalContext {
    build_regional_context(&ProjectSpec::default(), "Taylor", &taylor_profile(), &texas()).expect("context renders")
}

/// Compares against a golden file; `UPDATE_GOLDEN=1` rewrites it instead.
pub fn assert_golden(name: &str, actual: &str) {
    let path = fixture_dir().join("golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{} differs from rendered text:\n{actual}", path.display());
}

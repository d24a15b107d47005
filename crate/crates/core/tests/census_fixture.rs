mod common;

use std::collections::BTreeSet;

use common::*;
use communitypoll_core::attribute::Attribute;
use communitypoll_core::census::{CensusError, CountyMarginals};

#[test]
fn taylor_marginals_cover_every_attribute() {
    let m = taylor_marginals();
    let expected: BTreeSet<Attribute> = Attribute::ALL.into_iter().collect();
    assert_eq!(m.attributes(), expected);
    assert_eq!(m.fitted.len(), 10);
    let age = m.table(Attribute::AgeGroup).unwrap();
    assert_eq!(age.len(), 13);
    assert_eq!(age.categories()[0], "Under 5 years");
    assert_eq!(age.categories()[12], "85 years and over");
    // 2/5 of 11,200 rounded half up
    assert_eq!(age.count_of("18 to 19 years"), Some(4480));
    assert_eq!(age.count_of("15 to 19 years"), None);
    for t in &m.fitted {
        assert_eq!(t.counts().iter().sum::<u64>(), t.total(), "{}", t.dimension());
    }
}

#[test]
fn replay_is_identical() {
    let a = taylor_marginals();
    let b = taylor_marginals();
    assert_eq!(serde_json::to_string(&a.fitted).unwrap(), serde_json::to_string(&b.fitted).unwrap());
    assert_eq!(a, b);
    assert_eq!(taylor_profile(), taylor_profile());
}

#[test]
fn tables_survive_serialization() {
    let m = taylor_marginals();
    let json = serde_json::to_string(&m).unwrap();
    let back: CountyMarginals = serde_json::from_str(&json).unwrap();
    assert_eq!(back, m);
}

#[test]
fn taylor_profile_fields() {
    let p = taylor_profile();
    assert_eq!(p.population, 143_937);
    assert_eq!(p.median_age_years, Some(33.4));
    assert_eq!(p.households, 52_000);
    assert_eq!(p.top_industries.len(), 3);
    assert_eq!(p.top_industries[0].name, "Educational services, and health care and social assistance");
    let pct = p.homeownership_pct.unwrap();
    assert!((pct - 100.0 * 30_000.0 / 52_000.0).abs() < 1e-9);
    p.validate().unwrap();
}

#[test]
fn unknown_code_is_schema_error() {
    let client = offline_client();
    let dir = tempfile::tempdir().unwrap();
    let req = client.request(TAYLOR_STATE, TAYLOR_COUNTY, &["DP99_9999E".to_string()]).unwrap();
    // A cached payload that lacks the requested column.
    std::fs::write(
        dir.path().join(req.cache_file_name()),
        r#"[["DP05_0001E","state","county"],["143937","48","441"]]"#,
    )
    .unwrap();
    let client = communitypoll_core::census::CensusClient::new(
        client.year(),
        dir.path(),
        communitypoll_core::census::FetchMode::Offline,
    );
    match client.values(&req) {
        Err(CensusError::Schema { code }) => assert_eq!(code, "DP99_9999E"),
        other => panic!("expected schema error, got {other:?}"),
    }
}

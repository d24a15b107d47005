use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::variables::{county_profile_sets, standard_marginal_specs, MarginalSpec};
use super::{CensusError, CountyMarginals, CountyProfile, MarginalTable};
use crate::fsutil::{sha256_hex, write_atomic};

pub const DEFAULT_BASE_URL: &str = "https://api.census.gov";
pub const DEFAULT_YEAR: u16 = 2023;

/// Whether cache misses may go to the network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchMode {
    Live { base_url: String, api_key: Option<String> },
    /// Cache (fixture) playback only; a miss is an error.
    Offline,
}

/// One Data Profile query for a single county.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcsRequest {
    pub year: u16,
    pub state_fips: String,
    pub county_fips: String,
    pub codes: Vec<String>,
}

impl AcsRequest {
    pub fn new(year: u16, state_fips: &str, county_fips: &str, codes: &[String]) -> Result<Self, CensusError> {
        check_fips(state_fips, 2)?;
        check_fips(county_fips, 3)?;
        Ok(Self {
            year,
            state_fips: state_fips.to_string(),
            county_fips: county_fips.to_string(),
            codes: codes.to_vec(),
        })
    }

    /// Canonical request string hashed into the cache file name.
    pub fn canonical(&self) -> String {
        format!(
            "acs5/profile|{}|{}|{}|{}",
            self.year,
            self.state_fips,
            self.county_fips,
            self.codes.join(",")
        )
    }

    pub fn cache_file_name(&self) -> String {
        let hash = sha256_hex(self.canonical().as_bytes());
        format!("acs5_profile_{}_{}{}_{}.json", self.year, self.state_fips, self.county_fips, &hash[..16])
    }

    pub fn url(&self, base_url: &str, api_key: Option<&str>) -> String {
        let mut url = format!(
            "{}/data/{}/acs/acs5/profile?get={}&for=county:{}&in=state:{}",
            base_url.trim_end_matches('/'),
            self.year,
            self.codes.join(","),
            self.county_fips,
            self.state_fips
        );
        if let Some(key) = api_key {
            url.push_str("&key=");
            url.push_str(key);
        }
        url
    }
}

fn check_fips(code: &str, len: usize) -> Result<(), CensusError> {
    if code.len() == len && code.bytes().all(|b| b.is_ascii_digit()) {
        Ok(())
    } else {
        Err(CensusError::InvalidFips(code.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct CensusClient {
    year: u16,
    cache_dir: PathBuf,
    mode: FetchMode,
}

impl CensusClient {
    pub fn new(year: u16, cache_dir: impl Into<PathBuf>, mode: FetchMode) -> Self {
        Self { year, cache_dir: cache_dir.into(), mode }
    }

    /// Live client against the public API, key taken from `CENSUS_API_KEY` when set.
    pub fn live_from_env(year: u16, cache_dir: impl Into<PathBuf>) -> Self {
        let api_key = std::env::var("CENSUS_API_KEY").ok().filter(|k| !k.is_empty());
        Self::new(year, cache_dir, FetchMode::Live { base_url: DEFAULT_BASE_URL.to_string(), api_key })
    }

    pub fn year(&self) -> u16 {
        self.year
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    pub fn request(&self, state_fips: &str, county_fips: &str, codes: &[String]) -> Result<AcsRequest, CensusError> {
        AcsRequest::new(self.year, state_fips, county_fips, codes)
    }

    /// The verbatim API payload, from cache when present.
    pub fn payload(&self, req: &AcsRequest) -> Result<String, CensusError> {
        let path = self.cache_dir.join(req.cache_file_name());
        if path.exists() {
            return Ok(fs::read_to_string(&path)?);
        }
        match &self.mode {
            FetchMode::Offline => Err(CensusError::Fetch(format!(
                "no cached payload {} and network fetch is disabled",
                path.display()
            ))),
            FetchMode::Live { base_url, api_key } => {
                let body = http_get(req, base_url, api_key.as_deref())?;
                // Reject anything that is not a well-formed table before caching it.
                parse_rows(&body)?;
                write_atomic(&path, body.as_bytes())?;
                Ok(body)
            }
        }
    }

    /// Requested codes mapped to their raw string values.
    pub fn values(&self, req: &AcsRequest) -> Result<HashMap<String, Option<String>>, CensusError> {
        let rows = parse_rows(&self.payload(req)?)?;
        let (header, values) = (&rows[0], &rows[1]);
        let mut out = HashMap::with_capacity(req.codes.len());
        for code in &req.codes {
            let idx = header
                .iter()
                .position(|h| h.as_deref() == Some(code.as_str()))
                .ok_or_else(|| CensusError::Schema { code: code.clone() })?;
            out.insert(code.clone(), values.get(idx).cloned().flatten());
        }
        Ok(out)
    }

    /// One table per spec, categories in spec order.
    pub fn fetch_marginals(
        &self,
        state_fips: &str,
        county_fips: &str,
        specs: &[MarginalSpec],
    ) -> Result<Vec<MarginalTable>, CensusError> {
        specs
            .iter()
            .map(|spec| {
                let req = self.request(state_fips, county_fips, spec.variables.codes())?;
                let values = self.values(&req)?;
                let counts = spec
                    .variables
                    .codes()
                    .iter()
                    .map(|code| parse_count(code, values[code].as_deref()))
                    .collect::<Result<Vec<_>, _>>()?;
                MarginalTable::with_role(
                    spec.attribute,
                    spec.role,
                    spec.variables.labels().to_vec(),
                    counts,
                )
            })
            .collect()
    }

    /// All county tables for agent construction using the built-in variable sets.
    pub fn fetch_county_marginals(&self, state_fips: &str, county_fips: &str) -> Result<CountyMarginals, CensusError> {
        CountyMarginals::from_raw(self.fetch_marginals(state_fips, county_fips, &standard_marginal_specs())?)
    }

    pub fn fetch_county_profile(&self, state_fips: &str, county_fips: &str) -> Result<CountyProfile, CensusError> {
        let mut values = HashMap::new();
        for set in county_profile_sets() {
            let req = self.request(state_fips, county_fips, set.codes())?;
            values.extend(self.values(&req)?);
        }
        CountyProfile::from_values(&values)
    }
}

fn http_get(req: &AcsRequest, base_url: &str, api_key: Option<&str>) -> Result<String, CensusError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .http_status_as_error(false)
        .build()
        .into();
    let url = req.url(base_url, api_key);
    let mut resp = agent.get(&url).call().map_err(|e| CensusError::Fetch(e.to_string()))?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(|e| CensusError::Fetch(e.to_string()))?;
    if status != 200 {
        // The API answers 400 with "unknown variable 'X'" for bad codes.
        if let Some(code) = req.codes.iter().find(|c| body.contains(c.as_str())) {
            return Err(CensusError::Schema { code: code.clone() });
        }
        return Err(CensusError::Fetch(format!("HTTP {status}: {}", body.trim())));
    }
    Ok(body)
}

type Rows = Vec<Vec<Option<String>>>;

fn parse_rows(body: &str) -> Result<Rows, CensusError> {
    let rows: Rows = serde_json::from_str(body)
        .map_err(|e| CensusError::InvalidPayload(format!("expected a JSON array of arrays: {e}")))?;
    if rows.len() != 2 {
        return Err(CensusError::InvalidPayload(format!(
            "expected a header row and one county row, found {} rows",
            rows.len()
        )));
    }
    if rows[0].len() != rows[1].len() {
        return Err(CensusError::InvalidPayload("header and value rows differ in length".into()));
    }
    Ok(rows)
}

/// ACS encodes suppressed or unavailable estimates as large negative sentinels.
pub(super) fn parse_number(code: &str, raw: Option<&str>) -> Result<Option<f64>, CensusError> {
    let Some(raw) = raw else { return Ok(None) };
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| CensusError::InvalidPayload(format!("{code}: `{raw}` is not numeric")))?;
    if v < 0.0 {
        return Ok(None);
    }
    Ok(Some(v))
}

fn parse_count(code: &str, raw: Option<&str>) -> Result<u64, CensusError> {
    match parse_number(code, raw)? {
        Some(v) if v.fract() == 0.0 => Ok(v as u64),
        Some(v) => Err(CensusError::InvalidPayload(format!("{code}: count {v} is not an integer"))),
        None => Err(CensusError::InvalidPayload(format!("{code}: count unavailable"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn url_shape() {
        let req = AcsRequest::new(2023, "48", "441", &["DP05_0002E".into(), "DP05_0003E".into()]).unwrap();
        assert_eq!(
            req.url("https://api.census.gov/", Some("k")),
            "https://api.census.gov/data/2023/acs/acs5/profile?get=DP05_0002E,DP05_0003E&for=county:441&in=state:48&key=k"
        );
        assert!(req.cache_file_name().starts_with("acs5_profile_2023_48441_"));
    }

    #[test]
    fn fips_validation() {
        assert!(AcsRequest::new(2023, "4", "441", &[]).is_err());
        assert!(AcsRequest::new(2023, "48", "44a", &[]).is_err());
    }

    #[test]
    fn sentinels_are_missing() {
        assert_eq!(parse_number("X", Some("-666666666")).unwrap(), None);
        assert_eq!(parse_number("X", Some("33.4")).unwrap(), Some(33.4));
        assert!(parse_number("X", Some("abc")).is_err());
        assert!(parse_count("X", Some("1.5")).is_err());
        assert!(parse_count("X", None).is_err());
    }

    #[test]
    fn offline_miss_is_fetch_error() {
        let dir = tempfile::tempdir().unwrap();
        let client = CensusClient::new(2023, dir.path(), FetchMode::Offline);
        let req = client.request("48", "441", &["DP05_0002E".into()]).unwrap();
        assert!(matches!(client.payload(&req), Err(CensusError::Fetch(_))));
    }

    #[test]
    fn absent_variable_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let client = CensusClient::new(2023, dir.path(), FetchMode::Offline);
        let codes = vec!["DP05_0002E".to_string(), "DP99_9999E".to_string()];
        let req = client.request("48", "441", &codes).unwrap();
        fs::write(
            dir.path().join(req.cache_file_name()),
            r#"[["DP05_0002E","state","county"],["71500","48","441"]]"#,
        )
        .unwrap();
        match client.values(&req) {
            Err(CensusError::Schema { code }) => assert_eq!(code, "DP99_9999E"),
            other => panic!("unexpected {other:?}"),
        }
    }
}

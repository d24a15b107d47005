//! TOML run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::Grouping;
use crate::census::{FetchMode, DEFAULT_BASE_URL, DEFAULT_YEAR};
use crate::fsutil::sha256_hex;
use crate::impact::{ProjectSpec, StateContext};
use crate::poll::{BehaviorProfile, ExecConfig, MockProvider, PollRunConfig, Sampling};
use crate::survey::Questionnaire;
use crate::synth::{default_marital_multipliers, AgeMultiplier, IpfConfig, SynthesisConfig};

/// A configuration problem, located by line when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.path.display(), l, self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub state_fips: String,
    pub county_fips: String,
    pub state_name: String,
    pub county_name: String,
    #[serde(default = "default_year")]
    pub year: u16,
    /// Annual electricity use of all data centers in the state.
    pub state_dc_energy_mwh: f64,
}

fn default_year() -> u16 {
    DEFAULT_YEAR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSection {
    /// Goodness-of-fit significance level.
    pub alpha: f64,
    pub max_retries: usize,
    pub ipf: IpfConfig,
    pub marital_multipliers: Vec<AgeMultiplier>,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let d = SynthesisConfig::default();
        Self { alpha: d.alpha, max_retries: d.max_retries, ipf: d.ipf, marital_multipliers: default_marital_multipliers() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensusMode {
    /// Cached responses only.
    #[default]
    Offline,
    /// Fetch misses from the API (`CENSUS_API_KEY` is optional).
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusSection {
    pub mode: CensusMode,
    pub base_url: String,
}

impl Default for CensusSection {
    fn default() -> Self {
        Self { mode: CensusMode::Offline, base_url: DEFAULT_BASE_URL.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: ProviderKind,
    /// OpenAI-compatible endpoint root for the live provider.
    pub base_url: String,
    pub timeout_secs: u64,
    pub mock: BehaviorProfile,
}

impl Default for ProviderSection {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            base_url: "https://api.openai.com/v1".into(),
            timeout_secs: 120,
            mock: BehaviorProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PollSection {
    pub model: String,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub max_retries: u32,
    pub exec: ExecConfig,
}

impl Default for PollSection {
    fn default() -> Self {
        let d = PollRunConfig::default();
        Self {
            model: d.model,
            temperature: d.temperature,
            max_output_tokens: d.max_output_tokens,
            max_retries: d.max_retries,
            exec: d.exec,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdtaSection {
    pub enabled: bool,
    pub max_phrases: usize,
    pub max_themes: usize,
}

impl Default for LdtaSection {
    fn default() -> Self {
        Self { enabled: true, max_phrases: 3, max_themes: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// CSV of `community_id,question_id,option_id,y_hat,y`.
    pub pairs: Option<PathBuf>,
    pub grouping: Grouping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub cache_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { cache_dir: "cache".into(), out_dir: "out".into() }
    }
}

fn default_agent_count() -> usize {
    1000
}

fn default_alpha() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_agent_count")]
    pub agent_count: usize,
    pub seed: u64,
    /// Miscoverage level of the conformal intervals.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub region: Region,
    #[serde(default)]
    pub project: ProjectSpec,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub census: CensusSection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub poll: PollSection,
    #[serde(default)]
    pub ldta: LdtaSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub paths: Paths,
}

/// 1-based line of byte offset `pos`.
fn line_at(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line where `dotted` (e.g. `region.state_fips`) is assigned, following
/// `[table]` headers.
pub fn key_line(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = dotted.rsplit_once('.').unwrap_or(("", dotted));
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = h.trim_matches(|c| c == '[' || c == ' ').to_string();
            if current == dotted {
                return Some(i + 1);
            }
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            let k = k.trim().trim_matches('"');
            let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
            if (current == table && k == key) || full == dotted {
                return Some(i + 1);
            }
        }
    }
    None
}

impl RunConfig {
    /// Parses, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { path: path.into(), line: None, message: format!("cannot read: {e}") })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.cache_dir = base.join(&cfg.paths.cache_dir);
        cfg.paths.out_dir = base.join(&cfg.paths.out_dir);
        if let Some(p) = &cfg.calibration.pairs {
            cfg.calibration.pairs = Some(base.join(p));
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            path: path.into(),
            line: e.span().map(|s| line_at(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        cfg.validate().map_err(|(key, message)| ConfigError { path: path.into(), line: key_line(text, key), message })?;
        Ok(cfg)
    }

    /// Semantic checks, returning the offending key on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.agent_count == 0 {
            return Err(("agent_count", "agent_count must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(("alpha", format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        let digits = |s: &str, n: usize| s.len() == n && s.bytes().all(|b| b.is_ascii_digit());
        if !digits(&self.region.state_fips, 2) {
            return Err(("region.state_fips", "state_fips must be two digits".into()));
        }
        if !digits(&self.region.county_fips, 3) {
            return Err(("region.county_fips", "county_fips must be three digits".into()));
        }
        if !(self.region.state_dc_energy_mwh > 0.0 && self.region.state_dc_energy_mwh.is_finite()) {
            return Err(("region.state_dc_energy_mwh", "state_dc_energy_mwh must be positive".into()));
        }
        self.project.validate().map_err(|e| ("project", e.to_string()))?;
        if !(self.synthesis.alpha > 0.0 && self.synthesis.alpha < 1.0) {
            return Err(("synthesis.alpha", format!("synthesis alpha = {} must lie in (0, 1)", self.synthesis.alpha)));
        }
        self.synthesis.ipf.validate().map_err(|e| ("synthesis.ipf", e.to_string()))?;
        self.poll.exec.validate().map_err(|e| ("poll.exec", e.to_string()))?;
        if self.ldta.max_phrases == 0 || self.ldta.max_themes == 0 {
            return Err(("ldta", "max_phrases and max_themes must be at least 1".into()));
        }
        if self.provider.kind == ProviderKind::Mock {
            MockProvider::new(self.seed, self.mock_behavior(), &Questionnaire::standard())
                .map_err(|e| ("provider.mock", e.to_string()))?;
        }
        Ok(())
    }

    /// Hash of everything that affects results; directories are excluded.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.calibration.pairs = c.calibration.pairs.as_ref().map(|p| {
            let digest = std::fs::read(p).map(|b| sha256_hex(&b)).unwrap_or_default();
            PathBuf::from(digest)
        });
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        SynthesisConfig {
            agent_count: self.agent_count,
            seed: self.seed,
            ipf: self.synthesis.ipf,
            alpha: self.synthesis.alpha,
            max_retries: self.synthesis.max_retries,
            marital_multipliers: self.synthesis.marital_multipliers.clone(),
        }
    }

    /// Mock behavior with the population size filled in for stratified runs.
    pub fn mock_behavior(&self) -> BehaviorProfile {
        let mut b = self.provider.mock.clone();
        if b.sampling == Sampling::Stratified && b.population_size.is_none() {
            b.population_size = Some(self.agent_count);
        }
        b
    }

    pub fn poll_config(&self) -> PollRunConfig {
        PollRunConfig {
            model: self.poll.model.clone(),
            temperature: self.poll.temperature,
            max_output_tokens: self.poll.max_output_tokens,
            max_retries: self.poll.max_retries,
            exec: self.poll.exec.clone(),
        }
    }

    pub fn state_context(&self) -> StateContext {
        StateContext {
            state_name: self.region.state_name.clone(),
            year: self.region.year,
            dc_energy_mwh: self.region.state_dc_energy_mwh,
        }
    }

    pub fn fetch_mode(&self) -> FetchMode {
        match self.census.mode {
            CensusMode::Offline => FetchMode::Offline,
            CensusMode::Live => FetchMode::Live {
                base_url: self.census.base_url.clone(),
                api_key: std::env::var("CENSUS_API_KEY").ok().filter(|k| !k.is_empty()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "seed = 1\n[region]\nstate_fips = \"48\"\ncounty_fips = \"441\"\nstate_name = \"Texas\"\ncounty_name = \"Taylor\"\nstate_dc_energy_mwh = 21800000\n";

    #[test]
    fn minimal_config_defaults() {
        let c = RunConfig::parse(MIN, Path::new("run.toml")).unwrap();
        assert_eq!(c.agent_count, 1000);
        assert_eq!(c.poll.max_retries, 2);
        assert_eq!(c.provider.kind, ProviderKind::Mock);
    }

    #[test]
    fn errors_carry_lines() {
        let bad = MIN.replace("county_fips = \"441\"", "county_fips = \"44\"");
        let e = RunConfig::parse(&bad, Path::new("run.toml")).unwrap_err();
        assert_eq!(e.line, Some(4), "{e}");
        let unknown = format!("{MIN}colour = \"red\"\n");
        let e = RunConfig::parse(&unknown, Path::new("run.toml")).unwrap_err();
        assert_eq!(e.line, Some(8), "{e}");
        let e = RunConfig::parse(&MIN.replace("seed = 1", "seed = \"x\""), Path::new("run.toml")).unwrap_err();
        assert_eq!(e.line, Some(1), "{e}");
    }

    #[test]
    fn key_lines_follow_tables() {
        let t = "a = 1\n[x]\na = 2\n[x.y]\nb = 3\n";
        assert_eq!(key_line(t, "a"), Some(1));
        assert_eq!(key_line(t, "x.a"), Some(3));
        assert_eq!(key_line(t, "x.y.b"), Some(5));
        assert_eq!(key_line(t, "x.y"), Some(4));
    }
}

//! Stage orchestration over a run directory with a manifest and a lock file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{aggregate, ldta, net_support, open_texts, AggregateResult, LdtaConfig, TopicReport};
use crate::calibration::{calibrate_grouped, read_pairs_csv, GroupedModel};
use crate::census::{CensusClient, CountyMarginals, CountyProfile};
use crate::config::{ConfigError, ProviderKind, RunConfig};
use crate::fsutil::write_atomic;
use crate::impact::{build_regional_context, RegionalContext};
use crate::poll::{run_poll, MockProvider, OpenAiCompatible, PollError, Provider, SurveyResponse, RESPONSES_FILE};
use crate::report::{emit_report, interval_rows, IntervalRow};
use crate::survey::Questionnaire;
use crate::synth::{format_fit_table, read_population, synthesize, write_population, SynthError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Synthesize,
    Context,
    Poll,
    Analyze,
    Calibrate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Synthesize, Stage::Context, Stage::Poll, Stage::Analyze, Stage::Calibrate, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Synthesize => "synthesize",
            Stage::Context => "context",
            Stage::Poll => "poll",
            Stage::Analyze => "analyze",
            Stage::Calibrate => "calibrate",
            Stage::Report => "report",
        }
    }

    /// What this stage produces, as named in ordering errors.
    pub fn artifact_label(self) -> &'static str {
        match self {
            Stage::Ingest => "census",
            Stage::Synthesize => "population",
            Stage::Context => "context",
            Stage::Poll => "responses",
            Stage::Analyze => "aggregates",
            Stage::Calibrate => "calibration",
            Stage::Report => "report",
        }
    }

    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Synthesize | Stage::Context => &[Stage::Ingest],
            Stage::Poll => &[Stage::Synthesize, Stage::Context],
            Stage::Analyze => &[Stage::Poll],
            Stage::Calibrate | Stage::Report => &[Stage::Analyze],
        }
    }

    fn depends_on(self, other: Stage) -> bool {
        self.prerequisites().iter().any(|&p| p == other || p.depends_on(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub model: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    StageOrder(String),
    #[error("{0}")]
    Provider(String),
    #[error("run directory {0} is locked by another command; remove the lock file if no command is running")]
    Locked(PathBuf),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("run directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("run artifact: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl PipelineError {
    /// Process exit code for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::StageOrder(_) => 3,
            PipelineError::Provider(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageRun {
    Ran,
    UpToDate,
}

/// Shape of the topic artifact; skipped when topic analysis is disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TopicArtifact {
    Skipped,
    Complete { report: TopicReport },
    Partial { report: TopicReport },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisArtifact {
    pub n_ok: u64,
    pub n_failed: u64,
    pub net_support: f64,
    pub aggregates: Vec<AggregateResult>,
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn stage_err(stage: Stage) -> impl Fn(String) -> PipelineError {
    move |message| PipelineError::Stage { stage: stage.name(), message }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    hash: String,
    force: bool,
    questionnaire: Questionnaire,
    manifest: RunManifest,
    _lock: LockGuard,
}

impl Pipeline {
    /// Opens (creating if needed) the run directory named by the config and
    /// takes its lock for the lifetime of the pipeline.
    pub fn open(cfg: RunConfig, force: bool) -> Result<Self, PipelineError> {
        let out = cfg.paths.out_dir.clone();
        fs::create_dir_all(&out)?;
        let lock_path = out.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => return Err(PipelineError::Locked(out)),
            Err(e) => return Err(e.into()),
        }
        let lock = LockGuard(lock_path);
        let hash = cfg.config_hash();
        let manifest_path = out.join(MANIFEST_FILE);
        let mut manifest: RunManifest =
            if manifest_path.exists() { read_json(&manifest_path)? } else { RunManifest::default() };
        manifest.config_hash = hash.clone();
        manifest.seed = cfg.seed;
        manifest.model = cfg.poll.model.clone();
        Ok(Self { cfg, out, hash, force, questionnaire: Questionnaire::standard(), manifest, _lock: lock })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Completed under the current config with every artifact on disk.
    pub fn is_done(&self, stage: Stage) -> bool {
        self.manifest.stages.get(&stage).is_some_and(|r| {
            r.config_hash == self.hash && r.artifacts.iter().all(|a| self.out.join(a).exists())
        })
    }

    fn check_prerequisites(&self, stage: Stage) -> Result<(), PipelineError> {
        for &p in stage.prerequisites() {
            if !self.is_done(p) {
                return Err(PipelineError::StageOrder(format!(
                    "{} artifact missing: run `{}` before `{}`",
                    p.artifact_label(),
                    p.name(),
                    stage.name()
                )));
            }
        }
        Ok(())
    }

    pub fn run_stage(&mut self, stage: Stage) -> Result<StageRun, PipelineError> {
        self.check_prerequisites(stage)?;
        if !self.force && self.is_done(stage) {
            log::info!("{}: up to date", stage.name());
            return Ok(StageRun::UpToDate);
        }
        let started_unix_ms = now_ms();
        let clock = Instant::now();
        log::info!("{}: running", stage.name());
        let (artifacts, details) = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Synthesize => self.synthesize()?,
            Stage::Context => self.context()?,
            Stage::Poll => self.poll()?,
            Stage::Analyze => self.analyze()?,
            Stage::Calibrate => self.calibrate()?,
            Stage::Report => self.report()?,
        };
        let record = StageRecord {
            config_hash: self.hash.clone(),
            artifacts,
            started_unix_ms,
            finished_unix_ms: now_ms(),
            duration_ms: clock.elapsed().as_millis() as u64,
            details,
        };
        self.manifest.stages.retain(|s, _| !s.depends_on(stage));
        self.manifest.stages.insert(stage, record);
        write_json(&self.out.join(MANIFEST_FILE), &self.manifest)?;
        Ok(StageRun::Ran)
    }

    /// Every stage in order; calibration only when pairs are configured.
    pub fn run_all(&mut self) -> Result<Vec<(Stage, StageRun)>, PipelineError> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            if stage == Stage::Calibrate && self.cfg.calibration.pairs.is_none() {
                continue;
            }
            out.push((stage, self.run_stage(stage)?));
        }
        Ok(out)
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn provider(&self) -> Result<Box<dyn Provider>, PipelineError> {
        match self.cfg.provider.kind {
            ProviderKind::Mock => Ok(Box::new(
                MockProvider::new(self.cfg.seed, self.cfg.mock_behavior(), &self.questionnaire)
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
            )),
            ProviderKind::Live => Ok(Box::new(
                OpenAiCompatible::from_env(
                    self.cfg.provider.base_url.clone(),
                    std::time::Duration::from_secs(self.cfg.provider.timeout_secs),
                )
                .map_err(|e| PipelineError::Config(e.to_string()))?,
            )),
        }
    }

    fn ingest(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let r = &self.cfg.region;
        let client = CensusClient::new(r.year, self.cfg.paths.cache_dir.clone(), self.cfg.fetch_mode());
        let err = stage_err(Stage::Ingest);
        let marginals = client.fetch_county_marginals(&r.state_fips, &r.county_fips).map_err(|e| err(e.to_string()))?;
        let profile = client.fetch_county_profile(&r.state_fips, &r.county_fips).map_err(|e| err(e.to_string()))?;
        write_json(&self.path("census/marginals.json"), &marginals)?;
        write_json(&self.path("census/profile.json"), &profile)?;
        Ok((vec!["census/marginals.json".into(), "census/profile.json".into()], BTreeMap::new()))
    }

    fn synthesize(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let marginals: CountyMarginals = read_json(&self.path("census/marginals.json"))?;
        let err = stage_err(Stage::Synthesize);
        let out = match synthesize(&marginals, &self.cfg.synthesis_config()) {
            Ok(o) => o,
            Err(SynthError::RetriesExhausted { reports }) => {
                let last = reports.last().map(|r| format_fit_table(r)).unwrap_or_default();
                return Err(err(format!("population failed goodness of fit after all retries\n{last}")));
            }
            Err(e) => return Err(err(e.to_string())),
        };
        write_population(&self.path("population.jsonl"), &out.agents, &self.hash, out.accepted_seed)
            .map_err(|e| err(e.to_string()))?;
        write_atomic(&self.path("synthesis_fit.txt"), format_fit_table(&out.reports).as_bytes())?;
        let details = BTreeMap::from([
            ("retries".to_string(), serde_json::json!(out.retries)),
            ("accepted_seed".to_string(), serde_json::json!(out.accepted_seed)),
        ]);
        Ok((vec!["population.jsonl".into(), "synthesis_fit.txt".into()], details))
    }

    fn context(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let profile: CountyProfile = read_json(&self.path("census/profile.json"))?;
        let ctx =
            build_regional_context(&self.cfg.project, &self.cfg.region.county_name, &profile, &self.cfg.state_context())
                .map_err(|e| stage_err(Stage::Context)(e.to_string()))?;
        write_json(&self.path("context.json"), &ctx)?;
        write_atomic(&self.path("prompts/system.txt"), ctx.rendered_text.as_bytes())?;
        Ok((vec!["context.json".into(), "prompts/system.txt".into()], BTreeMap::new()))
    }

    fn poll(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let (_, agents) =
            read_population(&self.path("population.jsonl")).map_err(|e| stage_err(Stage::Poll)(e.to_string()))?;
        let ctx: RegionalContext = read_json(&self.path("context.json"))?;
        let provider = self.provider()?;
        let outcome = run_poll(&agents, &ctx, &self.questionnaire, provider.as_ref(), &self.cfg.poll_config(), &self.path("poll"))
            .map_err(|e| match e {
                PollError::Provider { .. } => PipelineError::Provider(e.to_string()),
                PollError::Config(m) => PipelineError::Config(m),
                other => stage_err(Stage::Poll)(other.to_string()),
            })?;
        log::info!("poll: {} ok, {} failed", outcome.n_ok, outcome.n_failed);
        let details = BTreeMap::from([
            ("n_ok".to_string(), serde_json::json!(outcome.n_ok)),
            ("n_failed".to_string(), serde_json::json!(outcome.n_failed)),
            ("input_tokens".to_string(), serde_json::json!(outcome.input_tokens)),
            ("output_tokens".to_string(), serde_json::json!(outcome.output_tokens)),
            ("provider".to_string(), serde_json::json!(provider.name())),
        ]);
        let artifacts = ["poll/requests.jsonl", "poll/raw_results.jsonl", "poll/responses.jsonl"];
        Ok((artifacts.iter().map(|s| s.to_string()).collect(), details))
    }

    fn responses(&self) -> Result<Vec<SurveyResponse>, PipelineError> {
        let text = fs::read_to_string(self.path("poll").join(RESPONSES_FILE))?;
        text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
    }

    fn analyze(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let responses = self.responses()?;
        let err = stage_err(Stage::Analyze);
        let aggregates = aggregate(&responses, &self.questionnaire).map_err(|e| err(e.to_string()))?;
        let q12 = aggregates.iter().find(|a| a.question_id == "q12").ok_or_else(|| err("no q12 aggregate".into()))?;
        let analysis = AnalysisArtifact {
            n_ok: q12.n_ok,
            n_failed: q12.n_failed,
            net_support: net_support(q12).map_err(|e| err(e.to_string()))?,
            aggregates,
        };
        write_json(&self.path("analysis/aggregates.json"), &analysis)?;
        let topics = if self.cfg.ldta.enabled {
            let cfg = LdtaConfig {
                model: self.cfg.poll.model.clone(),
                max_phrases: self.cfg.ldta.max_phrases,
                max_themes: self.cfg.ldta.max_themes,
                exec: self.cfg.poll.exec.clone(),
            };
            let report = ldta(&open_texts(&responses, "q13"), self.provider()?.as_ref(), &cfg);
            if report.is_partial() {
                log::warn!("topic analysis incomplete: {}", report.errors.join("; "));
                TopicArtifact::Partial { report }
            } else {
                TopicArtifact::Complete { report }
            }
        } else {
            TopicArtifact::Skipped
        };
        write_json(&self.path("analysis/topics.json"), &topics)?;
        let details = BTreeMap::from([("net_support".to_string(), serde_json::json!(analysis.net_support))]);
        Ok((vec!["analysis/aggregates.json".into(), "analysis/topics.json".into()], details))
    }

    fn calibrate(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let pairs_path = self
            .cfg
            .calibration
            .pairs
            .clone()
            .ok_or_else(|| PipelineError::Config("calibration.pairs is not set".into()))?;
        let err = stage_err(Stage::Calibrate);
        let pairs = read_pairs_csv(&pairs_path).map_err(|e| err(e.to_string()))?;
        let model = calibrate_grouped(&pairs, self.cfg.alpha, self.cfg.calibration.grouping).map_err(|e| err(e.to_string()))?;
        let analysis: AnalysisArtifact = read_json(&self.path("analysis/aggregates.json"))?;
        let rows = interval_rows(&analysis.aggregates, &model).map_err(|e| err(e.to_string()))?;
        write_json(&self.path("calibration/model.json"), &model)?;
        write_intervals(&self.path("calibration/intervals.csv"), &rows)?;
        Ok((vec!["calibration/model.json".into(), "calibration/intervals.csv".into()], BTreeMap::new()))
    }

    fn report(&self) -> Result<(Vec<String>, BTreeMap<String, serde_json::Value>), PipelineError> {
        let analysis: AnalysisArtifact = read_json(&self.path("analysis/aggregates.json"))?;
        let topics: TopicArtifact = read_json(&self.path("analysis/topics.json"))?;
        let intervals = if self.is_done(Stage::Calibrate) {
            let model: GroupedModel = read_json(&self.path("calibration/model.json"))?;
            Some((model.clone(), interval_rows(&analysis.aggregates, &model).map_err(|e| stage_err(Stage::Report)(e.to_string()))?))
        } else {
            None
        };
        let dir = self.path("report");
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        let written = emit_report(
            &dir,
            &self.cfg.region.county_name,
            &self.cfg.region.state_name,
            &self.questionnaire,
            &analysis,
            &topics,
            intervals.as_ref().map(|(_, rows)| rows.as_slice()),
        )?;
        Ok((written.into_iter().map(|p| format!("report/{p}")).collect(), BTreeMap::new()))
    }
}

pub(crate) fn write_intervals(path: &Path, rows: &[IntervalRow]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

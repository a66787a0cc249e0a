use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IoError, Result};
use crate::cogloop::PolicyConfig;
use crate::isp::{
    AwbConfig, CscConfig, DpcConfig, GammaConfig, IspConfig, NlmConfig, Schedule, SharpenConfig, StatsConfig, Toggle,
};
use crate::snn::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// The whole application configuration. Every field is optional in the JSON
/// document; absent fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub schema_version: u32,
    pub dpc: DpcConfig,
    pub awb: AwbConfig,
    pub demosaic: Toggle,
    pub nlm: NlmConfig,
    pub gamma: GammaConfig,
    pub csc: CscConfig,
    pub sharpen: SharpenConfig,
    pub stats: StatsConfig,
    pub policy: PolicyConfig,
    pub snn: ExperimentConfig,
    pub run: RunOptions,
}

impl Default for AppConfig {
    fn default() -> Self {
        let isp = IspConfig::default();
        AppConfig {
            schema_version: SCHEMA_VERSION,
            dpc: isp.dpc,
            awb: isp.awb,
            demosaic: isp.demosaic,
            nlm: isp.nlm,
            gamma: isp.gamma,
            csc: isp.csc,
            sharpen: isp.sharpen,
            stats: isp.stats,
            policy: PolicyConfig::default(),
            snn: ExperimentConfig::default(),
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Polled,
    Threaded,
}

impl ScheduleKind {
    pub fn schedule(self) -> Schedule {
        match self {
            ScheduleKind::Polled => Schedule::Polled,
            ScheduleKind::Threaded => Schedule::Threaded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    /// Seeds network initialization and synthetic data.
    pub seed: u64,
    /// Worker threads for data-parallel work.
    pub threads: usize,
    /// How the ISP moves tokens between stages.
    pub schedule: ScheduleKind,
    /// Frame period assumed when a frame has no exposure metadata.
    pub frame_interval_us: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: 7, threads: 1, schedule: ScheduleKind::Polled, frame_interval_us: 100_000 }
    }
}

impl AppConfig {
    pub fn isp(&self) -> IspConfig {
        IspConfig {
            dpc: self.dpc,
            awb: self.awb,
            demosaic: self.demosaic,
            nlm: self.nlm,
            gamma: self.gamma,
            csc: self.csc,
            sharpen: self.sharpen,
            stats: self.stats,
            roi: None,
            revision: 0,
        }
    }

    /// First violated invariant as `(json path, message)`.
    pub fn violation(&self) -> Option<(String, String)> {
        let v = |p: &str, m: String| Some((p.to_string(), m));
        if self.schema_version != SCHEMA_VERSION {
            return v("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if let Some(found) = self.isp().violation() {
            return Some(found);
        }
        if let Some((p, m)) = self.policy.violation() {
            return v(&format!("policy.{p}"), m);
        }
        if self.policy.grid != self.stats.grid {
            return v("policy.grid", format!("must equal stats.grid ({})", self.stats.grid));
        }
        if let Some((p, m)) = self.snn.violation() {
            return v(&format!("snn.{p}"), m);
        }
        if self.run.threads == 0 {
            return v("run.threads", "must be at least 1".into());
        }
        if self.run.frame_interval_us == 0 {
            return v("run.frame_interval_us", "must be positive".into());
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        match self.violation() {
            None => Ok(()),
            Some((path, message)) => Err(IoError::SchemaViolation { path, message }),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<AppConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: AppConfig = serde_path_to_error::deserialize(de).map_err(|e| IoError::SchemaViolation {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<AppConfig> {
    parse_config(&fs::read_to_string(path)?)
}

pub fn save_config(path: &Path, config: &AppConfig) -> Result<()> {
    config.validate()?;
    fs::write(path, serde_json::to_string_pretty(config)? + "\n")?;
    Ok(())
}

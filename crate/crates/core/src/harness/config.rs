use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{DenoiserParams, ScheduleParams};
use crate::perturb::{severity_defaults_for, PerturbationSpec};
use crate::tuning::TuningConfig;
use crate::watermark::{DEFAULT_CHANNEL, DEFAULT_RADIUS, DEFAULT_THRESHOLD};
use crate::{Error, Result};

/// Overrides the default report directory.
pub const OUTPUT_DIR_ENV: &str = "TRAJMARK_OUT";
pub const DEFAULT_OUTPUT_DIR: &str = "trajmark-out";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyParams {
    pub seed: u64,
    pub radius: usize,
    pub channel: usize,
}

impl Default for KeyParams {
    fn default() -> Self {
        KeyParams {
            seed: 42,
            radius: DEFAULT_RADIUS,
            channel: DEFAULT_CHANNEL,
        }
    }
}

/// Grids swept by the ablation runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationGrids {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub n_iters: Vec<usize>,
    pub start_step: Vec<usize>,
}

impl Default for AblationGrids {
    fn default() -> Self {
        AblationGrids {
            lambda1: vec![0.50, 1.00, 1.50, 2.00],
            lambda2: vec![0.0003, 0.0005, 0.0007],
            n_iters: vec![5, 10, 15, 20],
            start_step: vec![0, 10, 20, 30],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub prompts: Vec<String>,
    pub seeds: Vec<u64>,
    pub denoiser: DenoiserParams,
    pub schedule: ScheduleParams,
    pub key: KeyParams,
    pub tuning: TuningConfig,
    pub perturbations: Vec<PerturbationSpec>,
    pub threshold: f64,
    pub ablation: AblationGrids,
    /// Fraction of failed images above which a run counts as failed.
    pub max_failure_fraction: f64,
    /// `None` resolves through [`OUTPUT_DIR_ENV`].
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = ScheduleParams::default();
        RunConfig {
            prompts: vec!["a watercolor lighthouse at dusk".into()],
            seeds: (0..20).collect(),
            denoiser: DenoiserParams::default(),
            schedule,
            key: KeyParams::default(),
            tuning: TuningConfig::default(),
            perturbations: severity_defaults_for(schedule.t_sample),
            threshold: DEFAULT_THRESHOLD,
            ablation: AblationGrids::default(),
            max_failure_fraction: 0.1,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prompts.is_empty() {
            return Err(Error::Config("prompt list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let mut labels: Vec<String> = self.perturbations.iter().map(|p| p.label()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.perturbations.len() {
            return Err(Error::Config("duplicate perturbation entries".into()));
        }
        for p in &self.perturbations {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.tuning
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1]", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(Error::Config("max_failure_fraction outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str_auto(text: &str) -> Result<Self> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_str_auto(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
        })
    }
}

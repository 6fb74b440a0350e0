//! The JSON experiment description. Keys carry their units, unknown keys are
//! rejected, and omitted sections take their defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::counting::TimingModel;
use crate::electrothermal::ElectrothermalParams;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::tagger::TagConfig;
use crate::waveform::{FrontendConfig, PulseShape, SourceConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateBackend {
    Analytic,
    #[default]
    Electrothermal,
}

/// Parameters of the counting-statistics tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub elements: u64,
    pub efficiencies: Vec<f64>,
    pub max_photons: u64,
    pub jitter_ratios: Vec<f64>,
    pub max_photon_number: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            elements: 1000,
            efficiencies: vec![0.5, 0.7, 0.9, 1.0],
            max_photons: 10,
            jitter_ratios: vec![0.01, 0.05],
            max_photon_number: 10,
        }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elements == 0 {
            return Err(Error::config("stats.elements must be at least 1"));
        }
        if self.efficiencies.is_empty() || self.efficiencies.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::config("stats.efficiencies must be non-empty and within [0, 1]"));
        }
        if self.jitter_ratios.is_empty() || self.jitter_ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("stats.jitter_ratios must be non-empty and positive"));
        }
        if self.max_photon_number == 0 {
            return Err(Error::config("stats.max_photon_number must be at least 1"));
        }
        if self.max_photons > 10_000 {
            return Err(Error::config("stats.max_photons is limited to 10000"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub timing: TimingModel,
    #[serde(default)]
    pub frontend: FrontendConfig,
    #[serde(default)]
    pub template_backend: TemplateBackend,
    /// Used by the electrothermal backend; defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electrothermal: Option<ElectrothermalParams>,
    #[serde(default)]
    pub tagging: TagConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    /// Fired slots to generate.
    pub n_events: u64,
    #[serde(default)]
    pub stats: StatsConfig,
    pub output_dir: PathBuf,
}

/// Largest accepted `n_events`.
pub const MAX_EVENTS: u64 = 100_000_000;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.timing.validate()?;
        self.frontend.validate()?;
        self.electrothermal_params().validate()?;
        self.tagging.validate()?;
        self.pipeline.validate()?;
        self.stats.validate()?;
        if self.n_events == 0 || self.n_events > MAX_EVENTS {
            return Err(Error::config(format!("n_events must be within 1..={MAX_EVENTS}")));
        }
        Ok(())
    }

    pub fn electrothermal_params(&self) -> ElectrothermalParams {
        self.electrothermal.unwrap_or_default()
    }

    pub fn pulse_shape(&self) -> PulseShape {
        match self.template_backend {
            TemplateBackend::Analytic => PulseShape::Analytic(self.timing),
            TemplateBackend::Electrothermal => PulseShape::Electrothermal {
                params: self.electrothermal_params(),
                time_offset_seconds: self.timing.time_offset_seconds,
            },
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::calibration::DEFAULT_BOUNDS;
use crate::controller::ControllerConfig;
use crate::entropy::EstimatorKind;
use crate::error::{invalid, Error, Result};
use crate::pruner::PruneConfig;
use crate::scheduler::SchedulerConfig;
use crate::workload::{EntropyRegime, WorkloadSpec};

/// Abstract cost of one sequence step:
/// `c_attn_per_token * active_tokens + c_base_per_step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub c_attn_per_token: f64,
    pub c_base_per_step: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            c_attn_per_token: 1.0,
            c_base_per_step: 8.0,
        }
    }
}

impl CostModel {
    pub fn step_cost(&self, active_tokens: usize) -> f64 {
        self.c_attn_per_token * active_tokens as f64 + self.c_base_per_step
    }
}

/// When a sequence counts as finished before its step limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResolutionRule {
    pub entropy_threshold: f64,
    pub consecutive_steps: usize,
}

impl Default for ResolutionRule {
    fn default() -> Self {
        Self {
            entropy_threshold: 0.05,
            consecutive_steps: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSettings {
    pub calibration_enabled: bool,
    pub calibration_bounds: (f64, f64),
    /// Size of the synthetic held-out set.
    pub samples: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            calibration_enabled: false,
            calibration_bounds: DEFAULT_BOUNDS,
            samples: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub enable_sampling_control: bool,
    pub enable_scheduling: bool,
    pub enable_pruning: bool,
    pub entropy_estimator: EstimatorKind,
    pub k: usize,
    /// Temperature every sequence starts at (and keeps when sampling
    /// control is off).
    pub initial_temperature: f64,
    /// Multiplies generated logits; values above 1 induce overconfidence.
    pub logit_scale: f64,
    /// Hard cap on scheduling ticks.
    pub max_ticks: usize,
    pub controller: ControllerConfig,
    pub scheduler: SchedulerConfig,
    pub pruner: PruneConfig,
    pub cost_model: CostModel,
    pub resolution: ResolutionRule,
    pub calibration: CalibrationSettings,
    pub workload: WorkloadSpec,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            enable_sampling_control: true,
            enable_scheduling: true,
            enable_pruning: true,
            entropy_estimator: EstimatorKind::TailCorrected,
            k: 32,
            initial_temperature: 1.0,
            logit_scale: 1.0,
            max_ticks: 2000,
            controller: ControllerConfig::default(),
            scheduler: SchedulerConfig::default(),
            pruner: PruneConfig::default(),
            cost_model: CostModel::default(),
            resolution: ResolutionRule::default(),
            calibration: CalibrationSettings::default(),
            workload: WorkloadSpec::default(),
        }
    }
}

impl EngineConfig {
    /// Full system on a named workload preset.
    pub fn preset(regime: EntropyRegime, seed: u64) -> Self {
        Self {
            workload: WorkloadSpec {
                entropy_regime: regime,
                seed,
                ..WorkloadSpec::default()
            },
            ..Self::default()
        }
    }

    pub fn preset_named(name: &str, seed: u64) -> Result<Self> {
        Ok(Self::preset(name.parse()?, seed))
    }

    pub fn with_switches(mut self, sampling: bool, scheduling: bool, pruning: bool) -> Self {
        self.enable_sampling_control = sampling;
        self.enable_scheduling = scheduling;
        self.enable_pruning = pruning;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.workload.validate()?;
        self.controller.validate_for_vocab(self.workload.vocab_size)?;
        self.scheduler.validate()?;
        self.pruner.validate()?;
        let v = self.workload.vocab_size;
        match self.entropy_estimator {
            EstimatorKind::Exact => {}
            EstimatorKind::Topk if !(1..=v).contains(&self.k) => {
                return Err(invalid(format!("k = {} invalid for vocabulary of {v}", self.k)));
            }
            EstimatorKind::TailCorrected if !(1..v).contains(&self.k) => {
                return Err(invalid(format!(
                    "k = {} invalid for tail correction over {v} tokens",
                    self.k
                )));
            }
            _ => {}
        }
        if !(self.initial_temperature > 0.0 && self.initial_temperature.is_finite()) {
            return Err(invalid("initial_temperature must be > 0"));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return Err(invalid("logit_scale must be > 0"));
        }
        if !(self.cost_model.c_attn_per_token > 0.0 && self.cost_model.c_base_per_step >= 0.0) {
            return Err(invalid("cost model needs c_attn_per_token > 0 and c_base_per_step >= 0"));
        }
        if self.resolution.consecutive_steps == 0 {
            return Err(invalid("resolution.consecutive_steps must be >= 1"));
        }
        let (lo, hi) = self.calibration.calibration_bounds;
        if self.calibration.calibration_enabled && !(lo > 0.0 && lo < hi) {
            return Err(invalid("calibration_bounds must satisfy 0 < low < high"));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = EngineConfig::preset(EntropyRegime::NoisyPlateau, 9);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(EngineConfig::from_toml_str(&text).unwrap(), cfg);

        let partial = r#"
            enable_pruning = false
            entropy_estimator = "exact"

            [controller]
            gain = 0.1
            target_entropy = 1.5
            t_min = 0.5
            t_max = 1.5
            feedback_sign = "paper_literal"

            [scheduler]
            alpha = 2.0
            batch_size = 4

            [workload]
            entropy_regime = "decisive_drops"
            seed = 3
        "#;
        let cfg = EngineConfig::from_toml_str(partial).unwrap();
        assert!(!cfg.enable_pruning);
        assert_eq!(cfg.scheduler.batch_size, 4);
        assert_eq!(cfg.scheduler.beta, 1.0);
        assert_eq!(cfg.workload.seed, 3);
        assert_eq!(cfg.workload.n_sequences, 64);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = EngineConfig::default();
        cfg.k = cfg.workload.vocab_size;
        assert!(cfg.validate().is_err());
        cfg.entropy_estimator = EstimatorKind::Topk;
        assert!(cfg.validate().is_ok());
        cfg.k = 0;
        assert!(cfg.validate().is_err());

        let cfg = EngineConfig { logit_scale: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(EngineConfig::from_toml_str("max_ticks = \"many\"").is_err());
        assert!(EngineConfig::preset_named("bursty", 1).is_err());
    }
}

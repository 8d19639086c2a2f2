use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read design config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed design config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid design config: {0}")]
    Invalid(String),
}

/// Confidence term driving the energy slot of the composite loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PtmEnergy,
    Iptm,
    IptmMean,
    None,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::PtmEnergy => "ptm_energy",
            Objective::Iptm => "iptm",
            Objective::IptmMean => "iptm_mean",
            Objective::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub energy: f64,
    pub plddt: f64,
    pub ipae: f64,
    pub intra_pae: f64,
    pub con_inter: f64,
    pub con_intra: f64,
    pub rad_gyr: f64,
}

impl LossWeights {
    pub const ZERO: Self = Self {
        energy: 0.0,
        plddt: 0.0,
        ipae: 0.0,
        intra_pae: 0.0,
        con_inter: 0.0,
        con_intra: 0.0,
        rad_gyr: 0.0,
    };

    fn as_array(&self) -> [f64; 7] {
        [
            self.energy,
            self.plddt,
            self.ipae,
            self.intra_pae,
            self.con_inter,
            self.con_intra,
            self.rad_gyr,
        ]
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            energy: 0.05,
            plddt: 0.1,
            ipae: 0.1,
            intra_pae: 0.4,
            con_inter: 1.0,
            con_intra: 1.0,
            rad_gyr: 0.3,
        }
    }
}

/// Seeded stand-in target for the toy predictor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub length: usize,
    pub seed: u64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { length: 40, seed: 7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub features: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            features: 8,
            bins: 64,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub binder_length: usize,
    pub weights: LossWeights,
    pub objective: Objective,
    pub learning_rate: f64,
    pub stage_steps: [usize; 3],
    pub greedy_proposals: usize,
    /// `(T_init, T_final)`.
    pub temp_schedule: [f64; 2],
    pub plddt_terminate_below: f64,
    pub contact_cutoff: f64,
    pub contact_sharpness: f64,
    pub seed: u64,
    pub target: TargetConfig,
    pub predictor: PredictorConfig,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            binder_length: 60,
            weights: LossWeights::default(),
            objective: Objective::PtmEnergy,
            learning_rate: 0.1,
            stage_steps: [100, 50, 50],
            greedy_proposals: 100,
            temp_schedule: [1.0, 0.01],
            plddt_terminate_below: 0.3,
            contact_cutoff: 8.0,
            contact_sharpness: 1.0,
            seed: 0,
            target: TargetConfig::default(),
            predictor: PredictorConfig::default(),
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.binder_length == 0 {
            return bad("binder_length must be at least 1".into());
        }
        if let Some(w) = self.weights.as_array().iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return bad(format!("loss weights must be finite and non-negative, got {w}"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        let [t_init, t_final] = self.temp_schedule;
        if !(t_final > 0.0 && t_init >= t_final && t_init.is_finite()) {
            return bad(format!("temperatures must satisfy T_init >= T_final > 0, got {t_init} -> {t_final}"));
        }
        if !(self.contact_cutoff > 0.0) {
            return bad(format!("contact_cutoff must be positive, got {}", self.contact_cutoff));
        }
        if !(self.contact_sharpness > 0.0) {
            return bad(format!("contact_sharpness must be positive, got {}", self.contact_sharpness));
        }
        if !self.plddt_terminate_below.is_finite() {
            return bad("plddt_terminate_below must be finite".into());
        }
        if self.target.length == 0 {
            return bad("target.length must be at least 1".into());
        }
        if self.predictor.features < 3 || self.predictor.bins == 0 {
            return bad("predictor needs features >= 3 and bins >= 1".into());
        }
        Ok(())
    }
}

pub fn parse_design_config(text: &str) -> Result<DesignConfig, ConfigError> {
    let config: DesignConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn read_design_config(path: impl AsRef<Path>) -> Result<DesignConfig, ConfigError> {
    parse_design_config(&std::fs::read_to_string(path)?)
}

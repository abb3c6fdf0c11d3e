//! Serializable experiment configuration and its mapping onto core types.
//!
//! A single JSON document describes an experiment; command-line flags
//! override individual fields. The `synth` and `dict` subcommands accept
//! the same documents and read only the sections they need.

use nalgebra::{DMatrix, DVector, Matrix2};
use ncsq_core::channel::DropoutModel;
use ncsq_core::dictionary::DictionaryFamily;
use ncsq_core::synth::{CostWeights, Plant};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(message.into())
}

/// Plant and cost description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// State transition matrix, row by row.
    pub a: Vec<Vec<f64>>,
    /// Input gain vector.
    pub b1: Vec<f64>,
    /// Disturbance gain vector.
    pub b2: Vec<f64>,
    /// Disturbance variance.
    pub noise_var: f64,
    /// State weight matrix; identity when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    /// Input weight.
    pub r: f64,
    /// Prediction horizon (equals the buffer length).
    pub horizon: usize,
}

impl SystemConfig {
    /// The bundled benchmark system.
    pub fn benchmark() -> Self {
        let plant = ncsq_core::reference::benchmark_plant();
        Self {
            a: matrix_to_rows(&plant.a),
            b1: plant.b1.as_slice().to_vec(),
            b2: plant.b2.as_slice().to_vec(),
            noise_var: plant.noise_var,
            q: None,
            r: 1.0,
            horizon: ncsq_core::reference::BENCHMARK_HORIZON,
        }
    }

    pub fn build(&self) -> Result<(Plant<f64>, CostWeights<f64>), ConfigError> {
        let dim = self.a.len();
        if dim == 0 || self.a.iter().any(|row| row.len() != dim) {
            return Err(invalid("system matrix a must be square and nonempty"));
        }
        let a = DMatrix::from_row_slice(
            dim,
            dim,
            &self.a.iter().flatten().copied().collect::<Vec<_>>(),
        );
        if self.b1.len() != dim || self.b2.len() != dim {
            return Err(invalid("b1 and b2 must have the plant dimension"));
        }
        let b1 = DVector::from_column_slice(&self.b1);
        let b2 = DVector::from_column_slice(&self.b2);
        let plant = Plant::new(a, b1, b2, self.noise_var)
            .map_err(|e| invalid(format!("plant rejected: {e}")))?;
        let q = match &self.q {
            None => DMatrix::identity(dim, dim),
            Some(rows) => {
                if rows.len() != dim || rows.iter().any(|row| row.len() != dim) {
                    return Err(invalid("state weight q must match the plant dimension"));
                }
                DMatrix::from_row_slice(
                    dim,
                    dim,
                    &rows.iter().flatten().copied().collect::<Vec<_>>(),
                )
            }
        };
        let weights = CostWeights::new(q, self.r, self.horizon)
            .map_err(|e| invalid(format!("weights rejected: {e}")))?;
        Ok((plant, weights))
    }
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Dropout channel description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelConfig {
    Iid {
        drop_prob: f64,
    },
    TwoState {
        /// Row-stochastic transition matrix, row by row.
        transitions: [[f64; 2]; 2],
        /// Dropout probability per network state.
        drop_probs: [f64; 2],
    },
}

impl ChannelConfig {
    pub fn build(&self) -> Result<DropoutModel<f64>, ConfigError> {
        match self {
            Self::Iid { drop_prob } => {
                DropoutModel::iid(*drop_prob).map_err(|e| invalid(format!("channel rejected: {e}")))
            }
            Self::TwoState {
                transitions,
                drop_probs,
            } => {
                let t = Matrix2::new(
                    transitions[0][0],
                    transitions[0][1],
                    transitions[1][0],
                    transitions[1][1],
                );
                DropoutModel::two_state(t, drop_probs[0], drop_probs[1])
                    .map_err(|e| invalid(format!("channel rejected: {e}")))
            }
        }
    }

    pub fn is_two_state(&self) -> bool {
        matches!(self, Self::TwoState { .. })
    }
}

/// Dictionary family names as they appear in configs and result tables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
pub enum FamilyKind {
    #[serde(rename = "IID")]
    Iid,
    #[serde(rename = "GR")]
    Gr,
    #[serde(rename = "GSR")]
    Gsr,
    #[serde(rename = "GR2")]
    Gr2,
    #[serde(rename = "GSR2")]
    Gsr2,
}

impl FamilyKind {
    pub fn to_core(self) -> DictionaryFamily {
        match self {
            Self::Iid => DictionaryFamily::Iid,
            Self::Gr => DictionaryFamily::Gr,
            Self::Gsr => DictionaryFamily::Gsr,
            Self::Gr2 => DictionaryFamily::Gr2,
            Self::Gsr2 => DictionaryFamily::Gsr2,
        }
    }

    pub fn label(self) -> &'static str {
        self.to_core().name()
    }

    /// Shaped by the two-state stationary covariance.
    pub fn needs_two_state_shape(self) -> bool {
        matches!(self, Self::Gr2 | Self::Gsr2)
    }
}

/// One dictionary family entry of an experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DictionaryEntry {
    pub family: FamilyKind,
    /// Post-generation multiplier on the dictionary entries.
    pub scale: f64,
    /// Entry variance, required for (and only for) the IID family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_variance: Option<f64>,
}

impl DictionaryEntry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(invalid(format!(
                "dictionary scale must be positive, got {}",
                self.scale
            )));
        }
        match (self.family, self.entry_variance) {
            (FamilyKind::Iid, None) => Err(invalid("IID dictionary entry requires entry_variance")),
            (FamilyKind::Iid, Some(v)) if !v.is_finite() || v <= 0.0 => {
                Err(invalid("entry_variance must be positive"))
            }
            (FamilyKind::Iid, Some(_)) => Ok(()),
            (_, Some(_)) => Err(invalid("entry_variance is only valid for the IID family")),
            (_, None) => Ok(()),
        }
    }
}

/// Whether each run regenerates its dictionary or all runs of a cell share
/// one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum DictSeedModeConfig {
    #[default]
    PerRun,
    Shared,
}

impl DictSeedModeConfig {
    pub fn to_core(self) -> ncsq_core::sim::DictionarySeedMode {
        match self {
            Self::PerRun => ncsq_core::sim::DictionarySeedMode::PerRun,
            Self::Shared => ncsq_core::sim::DictionarySeedMode::Shared,
        }
    }
}

fn default_divergence_threshold() -> f64 {
    ncsq_core::sim::DEFAULT_DIVERGENCE_THRESHOLD
}

fn default_steps() -> usize {
    ncsq_core::sim::DEFAULT_STEPS
}

fn default_sections() -> usize {
    2
}

/// Full experiment description.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub system: SystemConfig,
    pub channel: ChannelConfig,
    pub dictionaries: Vec<DictionaryEntry>,
    /// Target bit rates, strictly increasing.
    pub rates: Vec<f64>,
    #[serde(default = "default_sections")]
    pub sections: usize,
    pub runs: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub master_seed: u64,
    /// Present only for the bad-state dropout sweep: grid of second-state
    /// dropout probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd2_grid: Option<Vec<f64>>,
    /// Default output directory; the command line `--out` flag wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
    #[serde(default)]
    pub dict_seed_mode: DictSeedModeConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rates.is_empty() {
            return Err(invalid("rate grid must not be empty"));
        }
        if self.rates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("rate grid must be strictly increasing"));
        }
        if self.rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(invalid("rates must be positive"));
        }
        if self.runs == 0 || self.steps == 0 {
            return Err(invalid("runs and steps must be at least 1"));
        }
        if self.sections == 0 {
            return Err(invalid("sections must be at least 1"));
        }
        if !self.divergence_threshold.is_finite() || self.divergence_threshold <= 0.0 {
            return Err(invalid("divergence threshold must be positive"));
        }
        for entry in &self.dictionaries {
            entry.validate()?;
            if entry.family.needs_two_state_shape() && !self.channel.is_two_state() {
                return Err(invalid(format!(
                    "{} dictionaries require a two-state channel",
                    entry.family.label()
                )));
            }
        }
        if let Some(grid) = &self.pd2_grid {
            if grid.is_empty() {
                return Err(invalid("pd2_grid must not be empty when present"));
            }
            if grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid("pd2_grid entries must be probabilities"));
            }
            if !self.channel.is_two_state() {
                return Err(invalid("pd2_grid requires a two-state channel"));
            }
        }
        self.channel.build()?;
        self.system.build()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Subset read by `ncsq synth`: system and channel only.
#[derive(Debug, Clone, Deserialize)]
pub struct SynthConfig {
    pub system: SystemConfig,
    pub channel: ChannelConfig,
}

/// Dictionary block of a `ncsq dict` config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub family: FamilyKind,
    pub rate: f64,
    #[serde(default = "default_sections")]
    pub sections: usize,
    pub scale: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_variance: Option<f64>,
}

/// Subset read by `ncsq dict`.
#[derive(Debug, Clone, Deserialize)]
pub struct DictConfig {
    pub system: SystemConfig,
    pub channel: ChannelConfig,
    pub dictionary: DictionarySpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_experiment() -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            system: SystemConfig::benchmark(),
            channel: ChannelConfig::Iid { drop_prob: 0.1 },
            dictionaries: vec![DictionaryEntry {
                family: FamilyKind::Gsr,
                scale: 2.0,
                entry_variance: None,
            }],
            rates: vec![4.8, 5.6],
            sections: 2,
            runs: 2,
            steps: 100,
            master_seed: 1,
            pd2_grid: None,
            output_dir: None,
            divergence_threshold: 1e9,
            dict_seed_mode: DictSeedModeConfig::PerRun,
        }
    }

    #[test]
    fn json_round_trip() {
        let cfg = tiny_experiment();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_non_increasing_rates() {
        let mut cfg = tiny_experiment();
        cfg.rates = vec![5.6, 4.8];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_two_state_families_on_iid_channels() {
        let mut cfg = tiny_experiment();
        cfg.dictionaries[0].family = FamilyKind::Gsr2;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_iid_family_without_variance() {
        let mut cfg = tiny_experiment();
        cfg.dictionaries[0].family = FamilyKind::Iid;
        assert!(cfg.validate().is_err());
        cfg.dictionaries[0].entry_variance = Some(25.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn family_names_serialize_uppercase() {
        assert_eq!(
            serde_json::to_string(&FamilyKind::Gsr2).unwrap(),
            "\"GSR2\""
        );
    }
}

//! Run configuration: a TOML file with one section per subsystem,
//! merged with command-line overrides.
//!
//! Every section is optional and falls back to its defaults. Seeds
//! cascade: the top-level `seed` fills any section whose own `seed` is
//! omitted (or 0), so one number pins the whole run while sections can
//! still be reseeded independently. A `--seed` override wins everywhere.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossVariant};
use crate::network::NetworkConfig;
use crate::trainer::TrainConfig;

fn default_seed() -> u64 {
    7
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Re-scale averaged instances back to unit l2 norm.
    pub renormalize_instances: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { renormalize_instances: default_true() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub synth: SyntheticSpec,
    pub data: DataConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            loss: LossConfig::default(),
            synth: SyntheticSpec::default(),
            data: DataConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<u64>,
    pub loss: Option<LossVariant>,
    pub kernel_length: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("config: {e}")))
    }

    /// Load the file (or defaults when absent), apply overrides, cascade
    /// seeds, and validate.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::Validation(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.finalize();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
            // One seed rules the run: sections go back to inheriting.
            self.network.seed = 0;
            self.train.seed = 0;
            self.synth.seed = 0;
        }
        if let Some(iterations) = overrides.iterations {
            self.train.iterations = iterations;
        }
        if let Some(variant) = overrides.loss {
            self.loss.variant = variant;
        }
        if let Some(k) = overrides.kernel_length {
            self.network.kernel_length = k;
        }
    }

    /// Fill inherited (zero) section seeds from the top-level seed.
    pub fn finalize(&mut self) {
        if self.network.seed == 0 {
            self.network.seed = self.seed;
        }
        if self.train.seed == 0 {
            self.train.seed = self.seed;
        }
        if self.synth.seed == 0 {
            self.synth.seed = self.seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.synth.validate()?;
        Ok(())
    }

    /// Fully resolved echo for provenance; written to the output dir.
    pub fn write_echo(&self, out_dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Validation(format!("config echo: {e}")))?;
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("config.toml"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_settings() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.network.encoder_filters, [512, 128]);
        assert_eq!(cfg.network.kernel_length, 4);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.train.batch_abnormal, 30);
        assert_eq!(cfg.loss.lambda_sparsity, 8e-5);
        assert_eq!(cfg.loss.variant, LossVariant::MeanDistance);
    }

    #[test]
    fn sections_parse_and_inherit_seed() {
        let text = r#"
seed = 42

[network]
input_dim = 32
encoder_filters = [64, 16]

[train]
iterations = 100
seed = 9

[loss]
variant = "max_hinge"
"#;
        let mut cfg = RunConfig::from_toml(text).unwrap();
        cfg.finalize();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.network.seed, 42); // inherited
        assert_eq!(cfg.train.seed, 9); // explicit
        assert_eq!(cfg.synth.seed, 42);
        assert_eq!(cfg.network.input_dim, 32);
        assert_eq!(cfg.loss.variant, LossVariant::MaxHinge);
    }

    #[test]
    fn overrides_beat_the_file() {
        let mut cfg = RunConfig::from_toml("seed = 1\n[train]\nseed = 3\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(5),
            iterations: Some(13),
            loss: Some(LossVariant::MaxHingeAvgMapping),
            kernel_length: Some(8),
        });
        cfg.finalize();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.seed, 5); // CLI seed overrides the section
        assert_eq!(cfg.train.iterations, 13);
        assert_eq!(cfg.network.kernel_length, 8);
        assert_eq!(cfg.loss.variant, LossVariant::MaxHingeAvgMapping);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[network]\ninput_dmi = 3\n").is_err());
        assert!(RunConfig::from_toml("nonsense = true\n").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = RunConfig::from_toml("[network]\nkernel_length = 0\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = RunConfig::from_toml("[train]\nlearning_rate = -1.0\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.network.input_dim = 32;
        cfg.finalize();
        cfg.write_echo(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
    }
}

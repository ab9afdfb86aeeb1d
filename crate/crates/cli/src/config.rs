use std::path::Path;

use logicnet::explain::PassRule;
use logicnet::saliency::ThetaRange;
use logicnet::switchdist::{EvalConfig, SwitchConfig, DEFAULT_ALPHA};
use logicnet::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything numeric a run depends on. Missing sections take defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub explain: ExplainSection,
    pub switchdist: SwitchdistSection,
    pub prune: PruneSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    /// `[min, step, max]`; the variant's default sweep when absent.
    pub theta: Option<[f64; 3]>,
    /// Literal `sf > 1 - theta` on negative paths instead of the sign-aware test.
    pub literal_rule: bool,
    pub image_width: usize,
    pub image_height: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            theta: None,
            literal_rule: false,
            image_width: logicnet::data::CROP,
            image_height: logicnet::data::CROP,
        }
    }
}

impl ExplainSection {
    pub fn theta_range(&self) -> Option<ThetaRange> {
        self.theta.map(|[min, step, max]| ThetaRange { min, step, max })
    }

    pub fn rule(&self) -> PassRule {
        if self.literal_rule {
            PassRule::Literal
        } else {
            PassRule::SignAware
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchdistSection {
    pub alpha: f64,
    /// `input_dim / 4` when absent.
    pub budget: Option<f64>,
    pub ig_steps: usize,
    pub max_samples: Option<usize>,
    pub traces: bool,
}

impl Default for SwitchdistSection {
    fn default() -> Self {
        SwitchdistSection {
            alpha: DEFAULT_ALPHA,
            budget: None,
            ig_steps: logicnet::baselines::DEFAULT_IG_STEPS,
            max_samples: None,
            traces: true,
        }
    }
}

impl SwitchdistSection {
    pub fn eval_config(&self, seed: u64) -> EvalConfig {
        EvalConfig {
            switch: SwitchConfig {
                alpha: self.alpha,
                budget: self.budget,
            },
            seed,
            ig_steps: self.ig_steps,
            max_samples: self.max_samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSection {
    /// Timing repetitions for `bench`.
    pub repetitions: usize,
}

impl Default for PruneSection {
    fn default() -> Self {
        PruneSection {
            repetitions: logicnet::mininet::MIN_REPETITIONS,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
        let Some(path) = path else {
            return Ok(ExperimentConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| logicnet::Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| {
            logicnet::Error::Config(format!("{}: {}", path.display(), e.message())).into()
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_uses_defaults() {
        let c: ExperimentConfig = toml::from_str("[train]\nepochs = 2\n").unwrap();
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.layers, vec![2500, 2500]);
        assert_eq!(c.switchdist, SwitchdistSection::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[train]\nepoch = 2\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[other]\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = ExperimentConfig::default();
        c.train.limit = Some(100);
        c.explain.theta = Some([0.0, 0.1, 1.0]);
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}

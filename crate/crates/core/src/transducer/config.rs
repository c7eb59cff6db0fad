use serde::{Deserialize, Serialize};

use morphome_nn::{AdamConfig, LrSchedule};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Gelu,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionEncoding {
    #[default]
    Sinusoidal,
    Learned,
}

/// How `batch_size` is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchUnit {
    #[default]
    Examples,
    /// Source plus target tokens per batch.
    Tokens,
}

/// Architecture and training hyperparameters of the transducer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder layers; the decoder has the same number.
    pub layers: usize,
    pub heads: usize,
    pub embedding_dim: usize,
    pub feed_forward_dim: usize,
    pub dropout: f64,
    pub max_updates: usize,
    pub batch_size: usize,
    pub batch_unit: BatchUnit,
    pub beam_width: usize,
    /// Beam width used when scoring the dev set at checkpoints.
    pub dev_beam_width: usize,
    pub checkpoint_every_epochs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lr_schedule: LrSchedule,
    pub label_smoothing: f64,
    pub clip_norm: f64,
    pub activation: Activation,
    pub positions: PositionEncoding,
    pub tie_output: bool,
    /// Standard deviation of the embedding initialization.
    pub init_std: f64,
    /// Decoding length cap beyond the longest training target.
    pub max_len_margin: usize,
    pub max_positions: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            layers: 4,
            heads: 4,
            embedding_dim: 256,
            feed_forward_dim: 1024,
            dropout: 0.1,
            max_updates: 10_000,
            batch_size: 400,
            batch_unit: BatchUnit::Examples,
            beam_width: 5,
            dev_beam_width: 1,
            checkpoint_every_epochs: 10,
            lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            lr_schedule: LrSchedule::Constant,
            label_smoothing: 0.1,
            clip_norm: 1.0,
            activation: Activation::Relu,
            positions: PositionEncoding::Sinusoidal,
            tie_output: true,
            init_std: 0.02,
            max_len_margin: 8,
            max_positions: 256,
            seed: 1,
        }
    }
}

impl ModelConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("layers", self.layers),
            ("heads", self.heads),
            ("embedding_dim", self.embedding_dim),
            ("feed_forward_dim", self.feed_forward_dim),
            ("max_updates", self.max_updates),
            ("batch_size", self.batch_size),
            ("beam_width", self.beam_width),
            ("dev_beam_width", self.dev_beam_width),
            ("checkpoint_every_epochs", self.checkpoint_every_epochs),
            ("max_positions", self.max_positions),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if self.heads > 0 && self.embedding_dim % self.heads != 0 {
            problems.push(format!(
                "embedding_dim {} is not divisible by heads {}",
                self.embedding_dim, self.heads
            ));
        }
        if self.positions == PositionEncoding::Sinusoidal && self.embedding_dim % 2 != 0 {
            problems.push("sinusoidal positions need an even embedding_dim".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            problems.push(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            problems.push(format!("label_smoothing {} outside [0, 1)", self.label_smoothing));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("clip_norm", self.clip_norm),
            ("init_std", self.init_std),
            ("adam_eps", self.adam_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be positive"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                problems.push(format!("{name} {v} outside [0, 1)"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip_through_toml() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ModelConfig>(&text).unwrap(), c);
        let partial: ModelConfig = toml::from_str("layers = 2\nheads = 2").unwrap();
        assert_eq!((partial.layers, partial.embedding_dim), (2, 256));
        assert!(toml::from_str::<ModelConfig>("layer = 2").is_err());
    }

    #[test]
    fn validation_collects_problems() {
        let c = ModelConfig {
            heads: 3,
            dropout: 1.0,
            ..ModelConfig::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("divisible") && msg.contains("dropout"), "{msg}");
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::LrSchedule;
use crate::data::HistoryLimits;
use crate::error::{Error, Result};

/// Every tunable of the model, MLE training and RL fine-tuning.
///
/// Serialized as a flat key/value TOML document; missing keys take their
/// default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub lstm_layers: usize,
    pub emb_dim: usize,
    pub reasoning_layers: usize,
    /// When false, each reasoning layer replaces its input outright.
    pub decision_maker: bool,
    pub finetune_embeddings: bool,
    pub param_init: f64,

    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: u64,
    pub lr_decay_start: u64,
    pub batch_size: usize,
    pub dropout: f64,
    pub max_grad_norm: f64,
    pub max_epochs: usize,
    pub seed: u64,

    pub beam_size: usize,
    pub max_decode_len: usize,

    pub min_freq: usize,
    pub history_max_tokens: usize,
    pub history_max_turns: usize,

    pub rl_learning_rate: f64,
    pub rl_use_baseline: bool,
    pub rl_pool_beam: usize,
    pub rl_eval_every: usize,
    pub rl_patience: usize,
    pub rl_max_updates: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_size: 500,
            lstm_layers: 2,
            emb_dim: 300,
            reasoning_layers: 3,
            decision_maker: true,
            finetune_embeddings: true,
            param_init: 0.1,

            learning_rate: 1.0,
            lr_decay: 0.95,
            lr_decay_every: 5000,
            lr_decay_start: 15000,
            batch_size: 64,
            dropout: 0.3,
            max_grad_norm: 5.0,
            max_epochs: 20,
            seed: 1,

            beam_size: 5,
            max_decode_len: 30,

            min_freq: 1,
            history_max_tokens: 200,
            history_max_turns: 3,

            rl_learning_rate: 0.01,
            rl_use_baseline: true,
            rl_pool_beam: 5,
            rl_eval_every: 50,
            rl_patience: 3,
            rl_max_updates: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("lstm_layers", self.lstm_layers),
            ("emb_dim", self.emb_dim),
            ("reasoning_layers", self.reasoning_layers),
            ("batch_size", self.batch_size),
            ("beam_size", self.beam_size),
            ("max_decode_len", self.max_decode_len),
            ("min_freq", self.min_freq),
            ("history_max_turns", self.history_max_turns),
            ("rl_pool_beam", self.rl_pool_beam),
            ("rl_eval_every", self.rl_eval_every),
            ("rl_patience", self.rl_patience),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "hidden_size must be even to split across directions, got {}",
                self.hidden_size
            )));
        }
        let reals = [
            ("param_init", self.param_init),
            ("learning_rate", self.learning_rate),
            ("lr_decay", self.lr_decay),
            ("rl_learning_rate", self.rl_learning_rate),
        ];
        for (name, v) in reals {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.max_grad_norm < 0.0 || !self.max_grad_norm.is_finite() {
            return Err(Error::Config("max_grad_norm must be non-negative".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.learning_rate,
            decay_rate: self.lr_decay,
            decay_every: self.lr_decay_every,
            start_step: self.lr_decay_start,
        }
    }

    pub fn history_limits(&self) -> HistoryLimits {
        HistoryLimits {
            max_tokens: self.history_max_tokens,
            keep_turns: self.history_max_turns,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

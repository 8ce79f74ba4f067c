use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Transformer,
    Mlp,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EarlyStopping {
    Off,
    /// Stop after this many epochs without a validation F1 improvement and
    /// restore the best parameters.
    Patience(u32),
}

/// Hyperparameters of one stream scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub d_k: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    /// Hidden width of the feed-forward sublayer (transformer) or of the
    /// baseline MLP. Defaults to `4 * d_k`.
    pub mlp_hidden: Option<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub n_epochs: usize,
    pub seed: u64,
    pub early_stopping: EarlyStopping,
    pub positional_encoding: bool,
    /// Decision threshold used for F1 monitoring and evaluation.
    pub threshold: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            d_k: 128,
            n_heads: 4,
            n_blocks: 1,
            mlp_hidden: None,
            alpha: 0.95,
            gamma: 1.0,
            learning_rate: 1e-4,
            n_epochs: 200,
            seed: 0,
            early_stopping: EarlyStopping::Off,
            positional_encoding: true,
            threshold: 0.5,
        }
    }
}

impl StreamConfig {
    /// Baseline MLP settings: alpha 0.98 and early stopping on validation F1.
    pub fn mlp_baseline() -> Self {
        StreamConfig {
            alpha: 0.98,
            early_stopping: EarlyStopping::Patience(20),
            ..Self::default()
        }
    }

    pub fn hidden(&self) -> usize {
        self.mlp_hidden.unwrap_or(4 * self.d_k)
    }

    pub fn head_dim(&self) -> usize {
        self.d_k / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.d_k < 2 || self.n_heads == 0 || !self.d_k.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_k {} must be >= 2 and divisible by n_heads {}",
                self.d_k, self.n_heads
            ));
        }
        if self.n_blocks == 0 || self.hidden() == 0 {
            return bad("n_blocks and mlp_hidden must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be >= 0", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = StreamConfig::default();
        assert_eq!((c.n_heads, c.n_blocks, c.hidden()), (4, 1, 512));
        assert_eq!((c.alpha, c.gamma), (0.95, 1.0));
        assert!(c.validate().is_ok());
        assert_eq!(StreamConfig::mlp_baseline().alpha, 0.98);
    }

    #[test]
    fn invalid_configs() {
        let base = StreamConfig::default();
        assert!(StreamConfig {
            n_heads: 3,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(StreamConfig {
            alpha: 1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(StreamConfig {
            gamma: -0.1,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(StreamConfig { threshold: 1.2, ..base }.validate().is_err());
    }

    #[test]
    fn json_uses_defaults_for_missing_fields() {
        let c: StreamConfig = serde_json::from_str(r#"{"d_k": 16, "early_stopping": {"patience": 5}}"#).unwrap();
        assert_eq!(c.d_k, 16);
        assert_eq!(c.early_stopping, EarlyStopping::Patience(5));
        assert_eq!(c.n_epochs, 200);
    }
}

//! Model hyperparameters.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub max_positions: usize,
    /// Decoder/output vocabulary size including specials and languages.
    pub vocab_size: usize,
    pub seed: u64,
    pub label_smoothing: f64,
}

impl ModelConfig {
    /// Desk-scale defaults suitable for CPU experiments.
    pub fn desk(vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            dim: 128,
            heads: 4,
            ffn_dim: 512,
            dropout: 0.1,
            max_positions: 256,
            vocab_size,
            seed,
            label_smoothing: 0.0,
        }
    }

    /// Full-scale defaults: 12+12 layers, dim 1024, 8 heads, FFN 4096,
    /// for a 1000-unit vocabulary.
    pub fn full_scale(vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            enc_layers: 12,
            dec_layers: 12,
            dim: 1024,
            heads: 8,
            ffn_dim: 4096,
            dropout: 0.1,
            max_positions: 1024,
            vocab_size,
            seed,
            label_smoothing: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "dim {} not divisible by heads {}",
                self.dim, self.heads
            )));
        }
        for (name, v) in [
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("dim", self.dim),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("max_positions", self.max_positions),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidConfig(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

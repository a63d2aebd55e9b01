use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the duration encoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_classes: usize,
    pub proj_dim: usize,
    pub encoder_channels: usize,
    pub n_blocks: usize,
    pub dilations: Vec<usize>,
    pub kernel_width: usize,
    pub embed_dim: usize,
    pub n_speakers: usize,
    pub attention_hidden: usize,
}

impl ModelConfig {
    /// Default desk-scale encoder for `n_classes` inputs and `n_speakers` outputs.
    pub fn new(n_classes: usize, n_speakers: usize) -> Self {
        ModelConfig {
            n_classes,
            proj_dim: 128,
            encoder_channels: 128,
            n_blocks: 3,
            dilations: vec![1, 2, 3],
            kernel_width: 3,
            embed_dim: 128,
            n_speakers,
            attention_hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_classes", self.n_classes),
            ("proj_dim", self.proj_dim),
            ("encoder_channels", self.encoder_channels),
            ("n_blocks", self.n_blocks),
            ("kernel_width", self.kernel_width),
            ("embed_dim", self.embed_dim),
            ("n_speakers", self.n_speakers),
            ("attention_hidden", self.attention_hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
        }
        if self.dilations.len() != self.n_blocks {
            return Err(Error::InvalidConfig(format!(
                "{} dilations for {} blocks",
                self.dilations.len(),
                self.n_blocks
            )));
        }
        if self.dilations.contains(&0) {
            return Err(Error::InvalidConfig("dilations must be at least 1".into()));
        }
        Ok(())
    }

    /// Input channels of block `b`.
    pub(crate) fn block_in(&self, b: usize) -> usize {
        if b == 0 {
            self.proj_dim
        } else {
            self.encoder_channels
        }
    }

    /// Tap offsets of block `b`, centred on the current position.
    pub(crate) fn tap_offsets(&self, b: usize) -> Vec<isize> {
        let d = self.dilations[b] as isize;
        let half = (self.kernel_width / 2) as isize;
        (0..self.kernel_width as isize).map(|k| (k - half) * d).collect()
    }
}

/// Optimisation settings for [`train`](super::train).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub min_chunk_len: usize,
    pub max_chunk_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            min_chunk_len: crate::features::MIN_CHUNK_LEN,
            max_chunk_len: crate::features::MAX_CHUNK_LEN,
        }
    }
}

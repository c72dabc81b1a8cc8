//! Model shape configuration shared by every layer of the forecaster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How look-back windows are mapped to channel tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// One affine map applied to every channel.
    Shared,
    /// A distinct affine map per channel.
    PerChannel,
}

/// Cross-channel interaction applied between embedding and projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingMode {
    None,
    /// Residual ReLU-affine along the channel axis, then along the feature axis.
    MlpMix,
    /// Single-head softmax attention over channel tokens, with residual.
    Attention,
}

/// Full shape description of one forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub channels: usize,
    /// Token embedding width.
    pub embed_dim: usize,
    /// Width of the per-channel adaptation slice appended to each token.
    pub adapt_dim: usize,
    /// Inner rank of each channel adapter.
    pub rank: usize,
    /// Number of mixing blocks; ignored when `mixing == None`.
    pub layers: usize,
    pub embedding: EmbeddingMode,
    pub mixing: MixingMode,
    pub adapter_enabled: bool,
}

impl ModelConfig {
    /// A small channel-dependent baseline: shared embedding, no mixing,
    /// no adapter. Widths follow the library defaults.
    pub fn baseline(lookback: usize, horizon: usize, channels: usize) -> Self {
        ModelConfig {
            lookback,
            horizon,
            channels,
            embed_dim: 64,
            adapt_dim: 16,
            rank: 4,
            layers: 2,
            embedding: EmbeddingMode::Shared,
            mixing: MixingMode::None,
            adapter_enabled: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback < 2 {
            return Err(Error::Config(format!(
                "lookback must be >= 2: got {}",
                self.lookback
            )));
        }
        if self.horizon < 1 {
            return Err(Error::Config(format!(
                "horizon must be >= 1: got {}",
                self.horizon
            )));
        }
        if self.channels < 1 {
            return Err(Error::Config(format!(
                "channels must be >= 1: got {}",
                self.channels
            )));
        }
        if self.embed_dim < 1 {
            return Err(Error::Config(format!(
                "embed_dim must be >= 1: got {}",
                self.embed_dim
            )));
        }
        if self.adapter_enabled {
            if self.rank < 1 || self.rank > self.embed_dim {
                return Err(Error::Config(format!(
                    "adapter rank must satisfy 1 <= rank <= embed_dim: got rank {} with embed_dim {}",
                    self.rank, self.embed_dim
                )));
            }
            if self.adapt_dim < 1 {
                return Err(Error::Config(format!(
                    "adapt_dim must be >= 1 when the adapter is enabled: got {}",
                    self.adapt_dim
                )));
            }
            if self.embedding != EmbeddingMode::Shared {
                return Err(Error::Config(
                    "the channel adapter conditions on a shared embedding; \
                     adapter_enabled requires embedding = shared"
                        .into(),
                ));
            }
        }
        Ok(())
    }

    /// Token width seen by mixing blocks and the projection:
    /// `embed_dim + adapt_dim` with the adapter, `embed_dim` without.
    pub fn effective_dim(&self) -> usize {
        if self.adapter_enabled {
            self.embed_dim + self.adapt_dim
        } else {
            self.embed_dim
        }
    }

    /// Mixing depth actually instantiated; `mixing = none` forces 0.
    pub fn effective_layers(&self) -> usize {
        match self.mixing {
            MixingMode::None => 0,
            _ => self.layers,
        }
    }

    /// Parameter count of the embedding stage alone.
    pub fn embedding_param_count(&self) -> usize {
        let per_map = self.lookback * self.embed_dim + self.embed_dim;
        match self.embedding {
            EmbeddingMode::Shared => per_map,
            EmbeddingMode::PerChannel => self.channels * per_map,
        }
    }

    /// Parameter count of one mixing block at the current effective width.
    pub fn mixing_block_param_count(&self) -> usize {
        let de = self.effective_dim();
        match self.mixing {
            MixingMode::None => 0,
            MixingMode::MlpMix => (self.channels * self.channels + self.channels) + (de * de + de),
            MixingMode::Attention => 4 * de * de,
        }
    }

    pub fn projection_param_count(&self) -> usize {
        self.effective_dim() * self.horizon + self.horizon
    }
}

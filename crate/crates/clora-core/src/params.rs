//! Trainable parameter storage, seeded initialization, and traversal.
//!
//! Every matrix in a `ParamSet` is visited in one fixed order (the same
//! order they are drawn at init): embedding, mixing blocks, projection,
//! adapters. Optimizer state, gradient accumulators, flat vectors, and
//! checkpoints all rely on that order being stable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::adapter::AdapterBank;
use crate::config::{EmbeddingMode, MixingMode, ModelConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Affine map stored as `w` plus a bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Matrix,
    /// `1 x out`; for the channel-mixing map the "out" axis is channels.
    pub b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    /// One `lookback x embed_dim` map used by every channel.
    Shared(Affine),
    /// A distinct map per channel, in channel order.
    PerChannel(Vec<Affine>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MixBlock {
    /// Residual ReLU-affine across channels, then across features.
    MlpMix { channel: Affine, feature: Affine },
    /// Single-head attention projections, all `d_eff x d_eff`, bias-free.
    Attention {
        wq: Matrix,
        wk: Matrix,
        wv: Matrix,
        wo: Matrix,
    },
}

/// Whether a matrix belongs to the shared backbone or the adapter bank.
/// Fine-tuning with a frozen backbone updates only `Adapter` matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Backbone,
    Adapter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub embed: Embedding,
    pub blocks: Vec<MixBlock>,
    /// `d_eff x horizon` map applied to each channel token.
    pub proj: Affine,
    pub adapters: Option<AdapterBank>,
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let dist = Normal::new(0.0, std).unwrap();
    Matrix::from_fn(rows, cols, || dist.sample(rng))
}

// Biases carry a little noise instead of starting at exactly zero: a zero
// bias can park a ReLU pre-activation exactly on its kink (e.g. when a
// dead embedding column feeds a mixing block), where the analytic
// subgradient and a finite difference legitimately disagree. Generic
// starting points keep gradients checkable everywhere.
const BIAS_INIT_STD: f64 = 0.01;

fn affine(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Affine {
    Affine {
        w: gaussian(fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng),
        b: gaussian(1, fan_out, BIAS_INIT_STD, rng),
    }
}

impl ParamSet {
    /// Seeded init: weights are `N(0, 1/sqrt(fan_in))`, biases
    /// `N(0, 0.01)`, adapters via [`AdapterBank::init`]. Matrices are
    /// drawn in traversal order, entries row-major, `w` before `b`, so
    /// equal (config, seed) pairs produce bitwise-equal parameters.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = config.lookback;
        let d = config.embed_dim;
        let de = config.effective_dim();
        let c = config.channels;

        let embed = match config.embedding {
            EmbeddingMode::Shared => Embedding::Shared(affine(t, d, &mut rng)),
            EmbeddingMode::PerChannel => {
                Embedding::PerChannel((0..c).map(|_| affine(t, d, &mut rng)).collect())
            }
        };

        let blocks = (0..config.effective_layers())
            .map(|_| match config.mixing {
                MixingMode::MlpMix => MixBlock::MlpMix {
                    channel: affine(c, c, &mut rng),
                    feature: affine(de, de, &mut rng),
                },
                MixingMode::Attention => {
                    let std = 1.0 / (de as f64).sqrt();
                    MixBlock::Attention {
                        wq: gaussian(de, de, std, &mut rng),
                        wk: gaussian(de, de, std, &mut rng),
                        wv: gaussian(de, de, std, &mut rng),
                        wo: gaussian(de, de, std, &mut rng),
                    }
                }
                MixingMode::None => unreachable!("effective_layers is 0 for mixing=none"),
            })
            .collect();

        let proj = affine(de, config.horizon, &mut rng);

        let adapters = if config.adapter_enabled {
            Some(AdapterBank::init(
                c,
                config.rank,
                d,
                config.adapt_dim,
                &mut rng,
            ))
        } else {
            None
        };

        Ok(ParamSet {
            embed,
            blocks,
            proj,
            adapters,
        })
    }

    /// Same structure, every matrix zeroed. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, m) in out.visit_mut() {
            m.fill(0.0);
        }
        out
    }

    /// Zeroed parameter set with the shapes `config` prescribes. Used as a
    /// loading skeleton by the checkpoint reader.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::init(config, 0)?;
        for (_, m) in p.visit_mut() {
            m.fill(0.0);
        }
        Ok(p)
    }

    /// All matrices in the fixed traversal order.
    pub fn visit(&self) -> Vec<(ParamKind, &Matrix)> {
        let mut out = Vec::new();
        match &self.embed {
            Embedding::Shared(a) => {
                out.push((ParamKind::Backbone, &a.w));
                out.push((ParamKind::Backbone, &a.b));
            }
            Embedding::PerChannel(maps) => {
                for a in maps {
                    out.push((ParamKind::Backbone, &a.w));
                    out.push((ParamKind::Backbone, &a.b));
                }
            }
        }
        for block in &self.blocks {
            match block {
                MixBlock::MlpMix { channel, feature } => {
                    out.push((ParamKind::Backbone, &channel.w));
                    out.push((ParamKind::Backbone, &channel.b));
                    out.push((ParamKind::Backbone, &feature.w));
                    out.push((ParamKind::Backbone, &feature.b));
                }
                MixBlock::Attention { wq, wk, wv, wo } => {
                    out.push((ParamKind::Backbone, wq));
                    out.push((ParamKind::Backbone, wk));
                    out.push((ParamKind::Backbone, wv));
                    out.push((ParamKind::Backbone, wo));
                }
            }
        }
        out.push((ParamKind::Backbone, &self.proj.w));
        out.push((ParamKind::Backbone, &self.proj.b));
        if let Some(bank) = &self.adapters {
            for phi in &bank.phi {
                out.push((ParamKind::Adapter, phi));
            }
            out.push((ParamKind::Adapter, &bank.w));
        }
        out
    }

    /// Mutable variant of [`visit`], same order.
    pub fn visit_mut(&mut self) -> Vec<(ParamKind, &mut Matrix)> {
        let mut out: Vec<(ParamKind, &mut Matrix)> = Vec::new();
        match &mut self.embed {
            Embedding::Shared(a) => {
                out.push((ParamKind::Backbone, &mut a.w));
                out.push((ParamKind::Backbone, &mut a.b));
            }
            Embedding::PerChannel(maps) => {
                for a in maps {
                    out.push((ParamKind::Backbone, &mut a.w));
                    out.push((ParamKind::Backbone, &mut a.b));
                }
            }
        }
        for block in &mut self.blocks {
            match block {
                MixBlock::MlpMix { channel, feature } => {
                    out.push((ParamKind::Backbone, &mut channel.w));
                    out.push((ParamKind::Backbone, &mut channel.b));
                    out.push((ParamKind::Backbone, &mut feature.w));
                    out.push((ParamKind::Backbone, &mut feature.b));
                }
                MixBlock::Attention { wq, wk, wv, wo } => {
                    out.push((ParamKind::Backbone, wq));
                    out.push((ParamKind::Backbone, wk));
                    out.push((ParamKind::Backbone, wv));
                    out.push((ParamKind::Backbone, wo));
                }
            }
        }
        out.push((ParamKind::Backbone, &mut self.proj.w));
        out.push((ParamKind::Backbone, &mut self.proj.b));
        if let Some(bank) = &mut self.adapters {
            for phi in &mut bank.phi {
                out.push((ParamKind::Adapter, phi));
            }
            out.push((ParamKind::Adapter, &mut bank.w));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.visit().iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }

    /// Flatten every matrix (traversal order, row-major entries).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, m) in self.visit() {
            out.extend_from_slice(m.data());
        }
        out
    }

    /// Inverse of [`to_flat`]. Errors on length mismatch.
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::shape(
                "load_flat",
                format!("{expected} parameters"),
                format!("{} values", flat.len()),
            ));
        }
        let mut offset = 0;
        for (_, m) in self.visit_mut() {
            let n = m.rows() * m.cols();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.visit().iter().all(|(_, m)| m.all_finite())
    }
}

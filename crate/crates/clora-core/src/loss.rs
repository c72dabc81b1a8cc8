//! Training losses, scaled to element means so loss values are MSEs.

use crate::config::{EmbeddingMode, MixingMode, ModelConfig};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::forward::{backward, forward, forward_cached};
use crate::matrix::Matrix;
use crate::params::{Embedding, ParamSet};

/// Joint loss over all channels: `mean((Y - forward(X))^2)` over every
/// element of every sample in the batch.
pub fn cd_loss(batch: &[WindowSample], params: &ParamSet, config: &ModelConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("loss of an empty batch".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for sample in batch {
        let pred = forward(&sample.x, params, config)?;
        let diff = pred.sub(&sample.y)?;
        sum += diff.data().iter().map(|v| v * v).sum::<f64>();
        count += diff.rows() * diff.cols();
    }
    Ok(sum / count as f64)
}

/// Build the single-channel forecaster that channel `c` of a per-channel
/// model realizes: its own embedding map, the shared projection.
fn single_channel_view(
    params: &ParamSet,
    config: &ModelConfig,
    c: usize,
) -> Result<(ParamSet, ModelConfig)> {
    let maps = match &params.embed {
        Embedding::PerChannel(maps) => maps,
        Embedding::Shared(_) => {
            return Err(Error::Config(
                "per-channel loss needs embedding = per_channel".into(),
            ))
        }
    };
    let mut cfg = *config;
    cfg.channels = 1;
    cfg.embedding = EmbeddingMode::Shared;
    cfg.mixing = MixingMode::None;
    cfg.layers = 0;
    cfg.adapter_enabled = false;
    let view = ParamSet {
        embed: Embedding::Shared(maps[c].clone()),
        blocks: vec![],
        proj: params.proj.clone(),
        adapters: None,
    };
    Ok((view, cfg))
}

/// Per-channel loss: each channel is forecast by its own predictor on its
/// own column, and the squared errors are averaged over every element.
/// Requires a per-channel embedding with no mixing and no adapter, since
/// those couple channels.
pub fn ci_loss(batch: &[WindowSample], params: &ParamSet, config: &ModelConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("loss of an empty batch".into()));
    }
    if config.embedding != EmbeddingMode::PerChannel {
        return Err(Error::Config(
            "ci_loss requires embedding = per_channel".into(),
        ));
    }
    if config.mixing != MixingMode::None || config.adapter_enabled {
        return Err(Error::Config(
            "ci_loss requires mixing = none and no adapter".into(),
        ));
    }
    let c_total = config.channels;
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in 0..c_total {
        let (view, view_cfg) = single_channel_view(params, config, c)?;
        for sample in batch {
            let x_c = Matrix::from_fn_indexed(sample.x.rows(), 1, |t, _| sample.x.get(t, c));
            let pred = forward(&x_c, &view, &view_cfg)?;
            for h in 0..pred.rows() {
                let d = pred.get(h, 0) - sample.y.get(h, c);
                sum += d * d;
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

/// Joint loss and its parameter gradient over the indexed subset of
/// `windows`, accumulated into `grads` (which must be zeroed by the
/// caller). Samples are processed in index order so accumulation is
/// reproducible.
pub fn batch_loss_and_grad(
    windows: &[WindowSample],
    indices: &[usize],
    params: &ParamSet,
    config: &ModelConfig,
    grads: &mut ParamSet,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Data("loss of an empty batch".into()));
    }
    let n = indices.len() as f64;
    let per_sample = config.horizon as f64 * config.channels as f64;
    let scale = 2.0 / (n * per_sample);
    let mut sum = 0.0;
    for &idx in indices {
        let sample = &windows[idx];
        let (pred, cache) = forward_cached(&sample.x, params, config)?;
        let diff = pred.sub(&sample.y)?;
        sum += diff.data().iter().map(|v| v * v).sum::<f64>();
        let d_y = diff.scale(scale);
        backward(&d_y, params, &cache, grads)?;
    }
    Ok(sum / (n * per_sample))
}

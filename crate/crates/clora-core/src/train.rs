//! Minibatch Adam training loop and the adapter-only fine-tuning regime.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::AdapterBank;
use crate::config::{MixingMode, ModelConfig};
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::loss::{batch_loss_and_grad, cd_loss};
use crate::optim::AdamState;
use crate::params::{ParamKind, ParamSet};

// Distinct seed streams so init, shuffling, and fresh fine-tune adapters
// never share a generator.
const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const ADAPTER_STREAM: u64 = 0x2545_f491_4f6c_dd1d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// 0 is a permitted no-op: no updates, empty record.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Update only adapter parameters; every backbone matrix stays
    /// bitwise unchanged.
    pub freeze_backbone: bool,
    /// Stop after this many epochs without a validation improvement;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            freeze_backbone: false,
            early_stop_patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative: got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the minibatch losses seen during the epoch.
    pub train_mse: f64,
    /// Full-pass loss on the validation windows after the epoch.
    pub val_mse: f64,
    /// Wall clock; excluded from every determinism contract.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub param_count: usize,
}

fn check_window_shapes(windows: &[WindowSample], config: &ModelConfig, name: &str) -> Result<()> {
    for w in windows {
        if w.x.rows() != config.lookback || w.x.cols() != config.channels {
            return Err(Error::shape(
                "fit",
                format!("{name} window {}x{}", w.x.rows(), w.x.cols()),
                format!("config {}x{}", config.lookback, config.channels),
            ));
        }
        if w.y.rows() != config.horizon || w.y.cols() != config.channels {
            return Err(Error::shape(
                "fit",
                format!("{name} target {}x{}", w.y.rows(), w.y.cols()),
                format!("config {}x{}", config.horizon, config.channels),
            ));
        }
    }
    Ok(())
}

/// Train a freshly initialized model. Returns the parameters of the best
/// validation epoch and the per-epoch record. Bitwise deterministic given
/// (data, configs, seed); wall-clock seconds are the only exception.
pub fn fit(
    train: &[WindowSample],
    val: &[WindowSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ParamSet, TrainRecord)> {
    fit_observed(train, val, model_config, train_config, |_| {})
}

/// [`fit`] with a per-epoch observer, called right after each epoch's
/// record is complete (progress printing and the like).
pub fn fit_observed(
    train: &[WindowSample],
    val: &[WindowSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ParamSet, TrainRecord)> {
    let params = ParamSet::init(model_config, train_config.seed)?;
    fit_from_observed(params, train, val, model_config, train_config, on_epoch)
}

/// Train starting from the given parameters (used by fine-tuning).
pub fn fit_from(
    params: ParamSet,
    train: &[WindowSample],
    val: &[WindowSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(ParamSet, TrainRecord)> {
    fit_from_observed(params, train, val, model_config, train_config, |_| {})
}

/// [`fit_from`] with a per-epoch observer.
pub fn fit_from_observed(
    mut params: ParamSet,
    train: &[WindowSample],
    val: &[WindowSample],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ParamSet, TrainRecord)> {
    model_config.validate()?;
    train_config.validate()?;
    if train.is_empty() {
        return Err(Error::Data("fit needs a non-empty train split".into()));
    }
    if val.is_empty() {
        return Err(Error::Data("fit needs a non-empty validation split".into()));
    }
    check_window_shapes(train, model_config, "train")?;
    check_window_shapes(val, model_config, "val")?;

    let param_count = params.param_count();
    let mut optimizer: Vec<Option<AdamState>> = params
        .visit()
        .iter()
        .map(|(kind, m)| {
            if train_config.freeze_backbone && *kind == ParamKind::Backbone {
                None
            } else {
                Some(AdamState::new(
                    m.rows(),
                    m.cols(),
                    train_config.learning_rate,
                ))
            }
        })
        .collect();

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(train_config.seed ^ SHUFFLE_STREAM);
    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut grads = params.zeros_like();

    let mut best_params = params.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs_since_best = 0usize;
    let mut record = Vec::new();

    for epoch in 1..=train_config.epochs {
        let started = Instant::now();
        indices.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_no, batch) in indices.chunks(train_config.batch_size).enumerate() {
            for (_, g) in grads.visit_mut() {
                g.fill(0.0);
            }
            let loss = batch_loss_and_grad(train, batch, &params, model_config, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss diverged at epoch {epoch}, batch {batch_no}"
                )));
            }
            loss_sum += loss;
            batches += 1;
            let grad_mats = grads.visit();
            for ((slot, (_, param)), (_, grad)) in optimizer
                .iter_mut()
                .zip(params.visit_mut())
                .zip(grad_mats.iter())
            {
                if let Some(state) = slot {
                    state.step(param, grad)?;
                }
            }
        }
        let train_mse = loss_sum / batches as f64;
        let val_mse = cd_loss(val, &params, model_config)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFinite(format!(
                "validation loss diverged after epoch {epoch}"
            )));
        }
        record.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
            seconds: started.elapsed().as_secs_f64(),
        });
        on_epoch(record.last().unwrap());
        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_params = params.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if train_config.early_stop_patience > 0
                && epochs_since_best >= train_config.early_stop_patience
            {
                break;
            }
        }
    }

    if record.is_empty() {
        // zero-epoch no-op: hand back the starting parameters
        best_params = params;
        best_val = f64::NAN;
    }
    Ok((
        best_params,
        TrainRecord {
            epochs: record,
            best_epoch,
            best_val_mse: best_val,
            param_count,
        },
    ))
}

/// Transfer a pretrained adapted model to a new dataset by training fresh
/// adapters only. The backbone is frozen: every non-adapter matrix of the
/// result is bitwise identical to `pretrained`. The target may have a
/// different channel count unless the model has channel-mixing MLP blocks,
/// whose weights are sized C x C.
pub fn finetune_adapters(
    pretrained: &ParamSet,
    pretrained_config: &ModelConfig,
    target_train: &[WindowSample],
    target_val: &[WindowSample],
    train_config: &TrainConfig,
) -> Result<(ParamSet, ModelConfig, TrainRecord)> {
    finetune_adapters_observed(
        pretrained,
        pretrained_config,
        target_train,
        target_val,
        train_config,
        |_| {},
    )
}

/// [`finetune_adapters`] with a per-epoch observer.
pub fn finetune_adapters_observed(
    pretrained: &ParamSet,
    pretrained_config: &ModelConfig,
    target_train: &[WindowSample],
    target_val: &[WindowSample],
    train_config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ParamSet, ModelConfig, TrainRecord)> {
    if !pretrained_config.adapter_enabled {
        return Err(Error::Config(
            "finetune_adapters needs a model with the adapter enabled".into(),
        ));
    }
    if target_train.is_empty() {
        return Err(Error::Data(
            "fine-tuning needs a non-empty target train split".into(),
        ));
    }
    let c_target = target_train[0].x.cols();
    let mut config = *pretrained_config;
    config.channels = c_target;
    if c_target != pretrained_config.channels
        && config.mixing == MixingMode::MlpMix
        && config.effective_layers() > 0
    {
        return Err(Error::shape(
            "finetune_adapters",
            format!(
                "channel-mixing weights for {} channels",
                pretrained_config.channels
            ),
            format!("target data with {c_target} channels"),
        ));
    }
    check_window_shapes(target_train, &config, "target train")?;
    check_window_shapes(target_val, &config, "target val")?;

    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed ^ ADAPTER_STREAM);
    let bank = AdapterBank::init(
        c_target,
        config.rank,
        config.embed_dim,
        config.adapt_dim,
        &mut rng,
    );
    let start = ParamSet {
        embed: pretrained.embed.clone(),
        blocks: pretrained.blocks.clone(),
        proj: pretrained.proj.clone(),
        adapters: Some(bank),
    };
    let mut tc = train_config.clone();
    tc.freeze_backbone = true;
    let (out, record) = fit_from_observed(start, target_train, target_val, &config, &tc, on_epoch)?;
    Ok((out, config, record))
}

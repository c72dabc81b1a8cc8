//! Multivariate time-series forecasting with channel-aware low-rank
//! adaptation.
//!
//! The model family is a small forecasting backbone: per-window reversible
//! normalization, a token embedding per channel (shared or per-channel),
//! optional cross-channel mixing blocks (MLP or single-head attention), and
//! an affine projection to the horizon. On top of the shared backbone, a
//! per-channel low-rank adapter injects channel identity at a cost of
//! `C*r*D + r*d` parameters instead of a full per-channel predictor.
//!
//! All numerics are 64-bit with fixed accumulation order, gradients are
//! hand-derived and checked against finite differences, and every random
//! draw flows through a seeded generator, so runs are bit-reproducible.

// Index loops are the house style here: the index is the quantity being
// iterated (channel, time step, coordinate) and loop order is part of the
// reproducibility contract.
#![allow(clippy::needless_range_loop)]

pub mod adapter;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod revin;
pub mod train;

pub use adapter::{
    apply_adapter, assemble_embedding, effective_adapter, extra_param_count, strategy_param_counts,
    total_param_count, AdapterBank, Strategy,
};
pub use checkpoint::{
    load_adapter_checkpoint, load_checkpoint, save_adapter_checkpoint, save_checkpoint,
    CheckpointKind,
};
pub use config::{EmbeddingMode, MixingMode, ModelConfig};
pub use data::{
    generate_synthetic, load_csv, make_windows, write_csv, Split, Standardizer, SynthConfig,
    TimeSeriesDataset, WindowSample,
};
pub use error::{Error, Result};
pub use experiments::{
    capacity_gap_report, shuffle_eval, shuffle_test, sweep, CapacityGapReport, CapacityGapRow,
    ShuffleReport, SweepAxis, SweepEntry, SweepResult,
};
pub use forward::{
    backward, channel_mixing_block, forward, forward_cached, project, token_embed, ForwardCache,
};
pub use gradcheck::grad_check;
pub use loss::{batch_loss_and_grad, cd_loss, ci_loss};
pub use matrix::{matmul_acc, matmul_into, Matrix};
pub use metrics::{
    compute_metrics, evaluate_model, improvement_report, ImprovementReport, MetricsReport,
};
pub use optim::AdamState;
pub use params::{Affine, Embedding, MixBlock, ParamKind, ParamSet};
pub use revin::{revin_denormalize, revin_normalize, RevInState};
pub use train::{
    finetune_adapters, finetune_adapters_observed, fit, fit_from, fit_from_observed, fit_observed,
    EpochRecord, TrainConfig, TrainRecord,
};

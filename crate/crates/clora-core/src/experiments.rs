//! Analysis routines built on the trained model: channel-shuffle probes,
//! rank and look-back sweeps, and train/test capacity-gap comparisons.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::{make_windows, Split, TimeSeriesDataset, WindowSample};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::{compute_metrics, evaluate_model, MetricsReport};
use crate::params::ParamSet;
use crate::train::{fit, TrainConfig};

fn validate_permutation(perm: &[usize], channels: usize) -> Result<()> {
    if perm.len() != channels {
        return Err(Error::Config(format!(
            "permutation length {} does not match {channels} channels",
            perm.len()
        )));
    }
    let mut seen = vec![false; channels];
    for &p in perm {
        if p >= channels || seen[p] {
            return Err(Error::Config(format!(
                "not a permutation of 0..{channels}: {perm:?}"
            )));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Evaluate the model with input channels rearranged by `perm`: position j
/// receives original channel perm[j], so every channel runs through the
/// parameters of a different position while still being scored against its
/// own future. Predictions are mapped back to the original channel order
/// before scoring, which keeps error terms accumulating in a canonical
/// order; a permutation-equivariant model therefore reproduces the baseline
/// MSE bit for bit.
pub fn shuffle_eval(
    params: &ParamSet,
    config: &ModelConfig,
    windows: &[WindowSample],
    perm: &[usize],
) -> Result<MetricsReport> {
    validate_permutation(perm, config.channels)?;
    if windows.is_empty() {
        return Err(Error::Data(
            "shuffle evaluation needs at least one window".into(),
        ));
    }
    let mut inverse = vec![0usize; perm.len()];
    for (j, &p) in perm.iter().enumerate() {
        inverse[p] = j;
    }
    let mut predictions = Vec::with_capacity(windows.len());
    let mut targets = Vec::with_capacity(windows.len());
    for w in windows {
        let shuffled = Matrix::from_fn_indexed(w.x.rows(), w.x.cols(), |i, j| w.x.get(i, perm[j]));
        let y_hat = crate::forward::forward(&shuffled, params, config)?;
        let restored =
            Matrix::from_fn_indexed(y_hat.rows(), y_hat.cols(), |i, j| y_hat.get(i, inverse[j]));
        predictions.push(restored);
        targets.push(w.y.clone());
    }
    compute_metrics(&predictions, &targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub baseline: MetricsReport,
    /// MSE under each seeded permutation, in draw order.
    pub permutation_mse: Vec<f64>,
    /// Mean of (permutation MSE - baseline MSE).
    pub mean_delta: f64,
    pub median_delta: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Measure how much the model relies on channel identity: shuffle the
/// channel order with seeded random permutations and report the MSE
/// degradation relative to the unshuffled baseline.
pub fn shuffle_test(
    params: &ParamSet,
    config: &ModelConfig,
    windows: &[WindowSample],
    seed: u64,
    n_permutations: usize,
) -> Result<ShuffleReport> {
    if config.channels < 2 {
        return Err(Error::Config(
            "a channel shuffle needs at least 2 channels".into(),
        ));
    }
    if n_permutations == 0 {
        return Err(Error::Config("n_permutations must be >= 1".into()));
    }
    let baseline = evaluate_model(params, config, windows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation_mse = Vec::with_capacity(n_permutations);
    let mut deltas = Vec::with_capacity(n_permutations);
    for _ in 0..n_permutations {
        let mut perm: Vec<usize> = (0..config.channels).collect();
        perm.shuffle(&mut rng);
        let shuffled = shuffle_eval(params, config, windows, &perm)?;
        permutation_mse.push(shuffled.mse);
        deltas.push(shuffled.mse - baseline.mse);
    }
    let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let median_delta = median(&deltas);
    Ok(ShuffleReport {
        baseline,
        permutation_mse,
        mean_delta,
        median_delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Rank,
    Lookback,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Rank => "rank",
            SweepAxis::Lookback => "lookback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub value: usize,
    pub train: MetricsReport,
    pub test: MetricsReport,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub swept_parameter: String,
    pub entries: Vec<SweepEntry>,
}

/// Train one model per value of the swept parameter, all from the same seed
/// and data pipeline, and record train/test metrics plus parameter counts.
pub fn sweep(
    axis: SweepAxis,
    values: &[usize],
    base_model: &ModelConfig,
    train_config: &TrainConfig,
    dataset: &TimeSeriesDataset,
) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "sweep values must be strictly increasing: {values:?}"
        )));
    }
    if axis == SweepAxis::Rank && !base_model.adapter_enabled {
        return Err(Error::Config(
            "a rank sweep needs the adapter enabled in the base model".into(),
        ));
    }
    let mut entries = Vec::with_capacity(values.len());
    for &value in values {
        let mut model = *base_model;
        match axis {
            SweepAxis::Rank => model.rank = value,
            SweepAxis::Lookback => model.lookback = value,
        }
        model.validate()?;
        let train_w = make_windows(dataset, model.lookback, model.horizon, Split::Train)?;
        let val_w = make_windows(dataset, model.lookback, model.horizon, Split::Val)?;
        let test_w = make_windows(dataset, model.lookback, model.horizon, Split::Test)?;
        let (params, record) = fit(&train_w, &val_w, &model, train_config)?;
        let train = evaluate_model(&params, &model, &train_w)?;
        let test = evaluate_model(&params, &model, &test_w)?;
        entries.push(SweepEntry {
            value,
            train,
            test,
            param_count: record.param_count,
        });
    }
    Ok(SweepResult {
        swept_parameter: axis.name().to_string(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityGapRow {
    pub label: String,
    pub train_mse: f64,
    pub test_mse: f64,
    /// test_mse - train_mse.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityGapReport {
    pub rows: Vec<CapacityGapRow>,
    /// True when the adapted twin's gap is no larger than the plain twin's.
    pub adapter_narrows_gap: bool,
}

fn gap_row(
    label: &str,
    params: &ParamSet,
    config: &ModelConfig,
    train_windows: &[WindowSample],
    test_windows: &[WindowSample],
) -> Result<CapacityGapRow> {
    let train = evaluate_model(params, config, train_windows)?;
    let test = evaluate_model(params, config, test_windows)?;
    Ok(CapacityGapRow {
        label: label.to_string(),
        train_mse: train.mse,
        test_mse: test.mse,
        gap: test.mse - train.mse,
    })
}

/// Compare an adapted model against its adapter-free twin on the same data:
/// train MSE measures capacity, the test-train gap measures generalization.
/// The configs must agree in everything except the adapter flag.
pub fn capacity_gap_report(
    adapter_on: (&ParamSet, &ModelConfig),
    adapter_off: (&ParamSet, &ModelConfig),
    train_windows: &[WindowSample],
    test_windows: &[WindowSample],
) -> Result<CapacityGapReport> {
    let (on_params, on_cfg) = adapter_on;
    let (off_params, off_cfg) = adapter_off;
    if !on_cfg.adapter_enabled || off_cfg.adapter_enabled {
        return Err(Error::Config(
            "capacity gap expects an adapter-on model first and its adapter-off twin second".into(),
        ));
    }
    let mut on_base = *on_cfg;
    on_base.adapter_enabled = false;
    if on_base != *off_cfg {
        return Err(Error::Config(
            "capacity gap twins must share every config field except the adapter flag".into(),
        ));
    }
    let on_row = gap_row("adapter_on", on_params, on_cfg, train_windows, test_windows)?;
    let off_row = gap_row(
        "adapter_off",
        off_params,
        off_cfg,
        train_windows,
        test_windows,
    )?;
    let adapter_narrows_gap = on_row.gap <= off_row.gap;
    Ok(CapacityGapReport {
        rows: vec![on_row, off_row],
        adapter_narrows_gap,
    })
}

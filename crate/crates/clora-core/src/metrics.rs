//! Forecast quality metrics: MSE, MAE, per-step error profiles, and
//! relative improvement between two models.

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::forward::forward;
use crate::matrix::Matrix;
use crate::params::ParamSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mae: f64,
    /// MSE restricted to each forecast step, index 0 = one step ahead.
    /// Its mean equals `mse` up to rounding.
    pub per_horizon_mse: Vec<f64>,
    pub n_samples: usize,
}

/// Metrics over paired prediction/target matrices, each H x C.
pub fn compute_metrics(predictions: &[Matrix], targets: &[Matrix]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::Data("metrics need at least one sample".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::shape(
            "compute_metrics",
            format!("{} predictions", predictions.len()),
            format!("{} targets", targets.len()),
        ));
    }
    let h = predictions[0].rows();
    let c = predictions[0].cols();
    let mut sq_sum = 0.0;
    let mut abs_sum = 0.0;
    let mut per_h = vec![0.0; h];
    for (p, t) in predictions.iter().zip(targets.iter()) {
        if p.rows() != h || p.cols() != c || t.rows() != h || t.cols() != c {
            return Err(Error::shape(
                "compute_metrics",
                p.shape_str(),
                t.shape_str(),
            ));
        }
        for i in 0..h {
            for j in 0..c {
                let e = p.get(i, j) - t.get(i, j);
                sq_sum += e * e;
                abs_sum += e.abs();
                per_h[i] += e * e;
            }
        }
    }
    let n = predictions.len();
    let denom = (n * h * c) as f64;
    let step_denom = (n * c) as f64;
    per_h.iter_mut().for_each(|v| *v /= step_denom);
    Ok(MetricsReport {
        mse: sq_sum / denom,
        mae: abs_sum / denom,
        per_horizon_mse: per_h,
        n_samples: n,
    })
}

/// Run the model over every window and compute metrics in the original
/// data units.
pub fn evaluate_model(
    params: &ParamSet,
    config: &ModelConfig,
    windows: &[WindowSample],
) -> Result<MetricsReport> {
    if windows.is_empty() {
        return Err(Error::Data("evaluation needs at least one window".into()));
    }
    let mut predictions = Vec::with_capacity(windows.len());
    let mut targets = Vec::with_capacity(windows.len());
    for w in windows {
        predictions.push(forward(&w.x, params, config)?);
        targets.push(w.y.clone());
    }
    compute_metrics(&predictions, &targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    /// Positive when the adapted model is better: 100 * (base - new) / base.
    pub mse_pct: f64,
    pub mae_pct: f64,
    /// Mean of the MSE and MAE percentages.
    pub combined_pct: f64,
}

fn pct(base: f64, adapted: f64, name: &str) -> Result<f64> {
    if !base.is_finite() || !adapted.is_finite() {
        return Err(Error::NonFinite(format!(
            "improvement over non-finite {name}"
        )));
    }
    if base <= 0.0 {
        return Err(Error::Config(format!(
            "improvement needs a positive base {name}, got {base}"
        )));
    }
    Ok(100.0 * (base - adapted) / base)
}

pub fn improvement_report(
    base: &MetricsReport,
    adapted: &MetricsReport,
) -> Result<ImprovementReport> {
    let mse_pct = pct(base.mse, adapted.mse, "MSE")?;
    let mae_pct = pct(base.mae, adapted.mae, "MAE")?;
    Ok(ImprovementReport {
        mse_pct,
        mae_pct,
        combined_pct: 0.5 * (mse_pct + mae_pct),
    })
}

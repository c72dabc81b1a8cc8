//! Per-window reversible channel normalization.
//!
//! Each look-back window is z-scored per channel with its own statistics
//! before embedding; predictions are mapped back through the same
//! statistics after projection. This is the statistics-only variant with
//! no learnable affine parameters.

use crate::data::STD_FLOOR;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Window statistics captured by [`revin_normalize`] and replayed by
/// [`revin_denormalize`]. Stds are floored at [`STD_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct RevInState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RevInState {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Z-score each channel of a `T x C` window by its own mean and std.
pub fn revin_normalize(x: &Matrix) -> Result<(Matrix, RevInState)> {
    let t = x.rows();
    let c = x.cols();
    if t < 2 {
        return Err(Error::Config(format!(
            "window normalization needs at least 2 rows: got {t}"
        )));
    }
    let n = t as f64;
    let mut mean = vec![0.0; c];
    for row in 0..t {
        for (ch, m) in mean.iter_mut().enumerate() {
            *m += x.get(row, ch);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for row in 0..t {
        for (ch, v) in var.iter_mut().enumerate() {
            let d = x.get(row, ch) - mean[ch];
            *v += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
    let mut out = Matrix::zeros(t, c);
    for row in 0..t {
        for ch in 0..c {
            out.set(row, ch, (x.get(row, ch) - mean[ch]) / std[ch]);
        }
    }
    Ok((out, RevInState { mean, std }))
}

/// Inverse of [`revin_normalize`] applied to an `H x C` prediction:
/// `y = y_norm * std_c + mean_c` per channel.
pub fn revin_denormalize(y_norm: &Matrix, state: &RevInState) -> Result<Matrix> {
    if y_norm.cols() != state.channels() {
        return Err(Error::shape(
            "revin_denormalize",
            format!("{} columns", y_norm.cols()),
            format!("{} state channels", state.channels()),
        ));
    }
    let mut out = y_norm.clone();
    for row in 0..out.rows() {
        let r = out.row_mut(row);
        for (ch, v) in r.iter_mut().enumerate() {
            *v = *v * state.std[ch] + state.mean[ch];
        }
    }
    Ok(out)
}

//! Dataset loading, synthetic generation, windowing, and standardization.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lag-1 coefficient of the shared AR(1) latent in synthetic data.
pub const SHARED_LATENT_AR1: f64 = 0.9;

/// Floor applied to every standard deviation estimate.
pub const STD_FLOOR: f64 = 1e-8;

/// Full multivariate series with channel metadata and split boundaries.
#[derive(Debug, Clone)]
pub struct TimeSeriesDataset {
    pub values: Matrix, // T_total x C
    pub channel_names: Vec<String>,
    pub split_fractions: (f64, f64, f64),
}

/// Which region of the timeline a window set is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One (look-back, horizon) training pair. `x` and `y` are contiguous,
/// non-overlapping slices of the source series: `y` starts exactly at
/// `origin_index + lookback`.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub x: Matrix, // T x C
    pub y: Matrix, // H x C
    pub origin_index: usize,
}

impl TimeSeriesDataset {
    pub fn new(
        values: Matrix,
        channel_names: Vec<String>,
        split_fractions: (f64, f64, f64),
    ) -> Result<Self> {
        if channel_names.len() != values.cols() {
            return Err(Error::shape(
                "dataset",
                format!("{} channels", values.cols()),
                format!("{} names", channel_names.len()),
            ));
        }
        let (a, b, c) = split_fractions;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be positive and sum to 1: got ({a}, {b}, {c})"
            )));
        }
        Ok(TimeSeriesDataset {
            values,
            channel_names,
            split_fractions,
        })
    }

    pub fn with_default_splits(values: Matrix, channel_names: Vec<String>) -> Result<Self> {
        Self::new(values, channel_names, (0.7, 0.1, 0.2))
    }

    pub fn total_len(&self) -> usize {
        self.values.rows()
    }

    pub fn channels(&self) -> usize {
        self.values.cols()
    }

    /// Half-open index range `[start, end)` of a split region.
    pub fn split_range(&self, split: Split) -> (usize, usize) {
        let total = self.total_len();
        let n_train = (self.split_fractions.0 * total as f64).floor() as usize;
        let n_val = (self.split_fractions.1 * total as f64).floor() as usize;
        match split {
            Split::Train => (0, n_train),
            Split::Val => (n_train, n_train + n_val),
            Split::Test => (n_train + n_val, total),
        }
    }
}

/// Configuration of the seeded synthetic generator.
///
/// Channel c is `hetero_amp * sin(2*pi*f_c*t + psi_c + phase_shift)
/// + shared_amp * g[t] + noise_sigma * eps[t][c]` where `f_c` is drawn
/// uniformly from `freq_range`, `psi_c` uniformly from `[0, 2*pi)`, `g` is a
/// shared AR(1) latent with coefficient 0.9, and `eps` is unit Gaussian.
///
/// Draw order is fixed (per-channel frequency and phase pairs, then the
/// latent, then noise row-major), so equal configs give bitwise-equal data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub channels: usize,
    pub length: usize,
    pub seed: u64,
    pub hetero_amp: f64,
    pub shared_amp: f64,
    pub noise_sigma: f64,
    /// Per-channel frequency range in cycles per sample; take `lo == hi`
    /// to pin every channel to one period.
    pub freq_range: (f64, f64),
    /// Added to every channel's phase; used by the cross-dataset transfer
    /// experiment to build phase-shifted targets.
    pub phase_shift: f64,
}

impl SynthConfig {
    pub fn new(channels: usize, length: usize, seed: u64) -> Self {
        SynthConfig {
            channels,
            length,
            seed,
            hetero_amp: 1.0,
            shared_amp: 0.3,
            noise_sigma: 0.05,
            freq_range: (0.02, 0.25),
            phase_shift: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(Error::Config(format!(
                "synthetic generator needs at least 2 channels: got {}",
                self.channels
            )));
        }
        if self.length < 64 {
            return Err(Error::Config(format!(
                "synthetic generator needs length >= 64: got {}",
                self.length
            )));
        }
        let (lo, hi) = self.freq_range;
        if !(lo > 0.0 && hi < 0.5 && lo <= hi) {
            return Err(Error::Config(format!(
                "freq_range must satisfy 0 < lo <= hi < 0.5: got ({lo}, {hi})"
            )));
        }
        if self.hetero_amp < 0.0 || self.shared_amp < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Config(
                "synthetic amplitudes must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Generate a seeded synthetic dataset with controllable channel
/// heterogeneity. Identical configs produce bitwise-identical values.
pub fn generate_synthetic(config: &SynthConfig) -> Result<TimeSeriesDataset> {
    config.validate()?;
    let c = config.channels;
    let t_total = config.length;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let (lo, hi) = config.freq_range;
    let mut freqs = Vec::with_capacity(c);
    let mut phases = Vec::with_capacity(c);
    for _ in 0..c {
        let f = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let psi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        freqs.push(f);
        phases.push(psi + config.phase_shift);
    }

    // Shared AR(1) latent, stationary start.
    let stationary_std = 1.0 / (1.0 - SHARED_LATENT_AR1 * SHARED_LATENT_AR1).sqrt();
    let mut latent = Vec::with_capacity(t_total);
    let first: f64 = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    latent.push(first * stationary_std);
    for t in 1..t_total {
        let innovation: f64 =
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
        latent.push(SHARED_LATENT_AR1 * latent[t - 1] + innovation);
    }

    let mut values = Matrix::zeros(t_total, c);
    for t in 0..t_total {
        for ch in 0..c {
            let noise: f64 =
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            let seasonal = (std::f64::consts::TAU * freqs[ch] * t as f64 + phases[ch]).sin();
            let v = config.hetero_amp * seasonal
                + config.shared_amp * latent[t]
                + config.noise_sigma * noise;
            values.set(t, ch, v);
        }
    }

    let names = (0..c).map(|i| format!("ch{i}")).collect();
    TimeSeriesDataset::with_default_splits(values, names)
}

/// Stride-1 sliding windows fully inside one split region.
///
/// Returns `region_len - lookback - horizon + 1` samples; errors if the
/// region is too short. `origin_index` is absolute on the dataset timeline.
pub fn make_windows(
    ds: &TimeSeriesDataset,
    lookback: usize,
    horizon: usize,
    split: Split,
) -> Result<Vec<WindowSample>> {
    if lookback < 2 {
        return Err(Error::Config(format!(
            "lookback must be >= 2: got {lookback}"
        )));
    }
    if horizon < 1 {
        return Err(Error::Config(format!(
            "horizon must be >= 1: got {horizon}"
        )));
    }
    let (start, end) = ds.split_range(split);
    let region_len = end - start;
    let needed = lookback + horizon;
    if region_len < needed {
        return Err(Error::Data(format!(
            "{split:?} region has {region_len} steps but windowing needs at least {needed} (lookback {lookback} + horizon {horizon})"
        )));
    }
    let c = ds.channels();
    let count = region_len - needed + 1;
    let mut out = Vec::with_capacity(count);
    for origin in start..start + count {
        let mut x = Matrix::zeros(lookback, c);
        for t in 0..lookback {
            x.row_mut(t).copy_from_slice(ds.values.row(origin + t));
        }
        let mut y = Matrix::zeros(horizon, c);
        for h in 0..horizon {
            y.row_mut(h)
                .copy_from_slice(ds.values.row(origin + lookback + h));
        }
        out.push(WindowSample {
            x,
            y,
            origin_index: origin,
        });
    }
    Ok(out)
}

/// Per-channel mean/std computed on the train split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit on the train region of `ds`. Stds are floored at [`STD_FLOOR`].
    pub fn fit(ds: &TimeSeriesDataset) -> Self {
        let (start, end) = ds.split_range(Split::Train);
        let n = (end - start) as f64;
        let c = ds.channels();
        let mut mean = vec![0.0; c];
        for t in start..end {
            for (ch, m) in mean.iter_mut().enumerate() {
                *m += ds.values.get(t, ch);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; c];
        for t in start..end {
            for (ch, v) in var.iter_mut().enumerate() {
                let d = ds.values.get(t, ch) - mean[ch];
                *v += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt().max(STD_FLOOR)).collect();
        Standardizer { mean, std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, ds: &TimeSeriesDataset, op: &'static str) -> Result<()> {
        if self.channels() != ds.channels() {
            return Err(Error::shape(
                op,
                format!("{} stat channels", self.channels()),
                format!("{} data channels", ds.channels()),
            ));
        }
        Ok(())
    }

    /// Map the whole dataset into z-score space.
    pub fn standardize(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check(ds, "standardize")?;
        let mut values = ds.values.clone();
        for t in 0..values.rows() {
            let row = values.row_mut(t);
            for (ch, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[ch]) / self.std[ch];
            }
        }
        Ok(TimeSeriesDataset {
            values,
            channel_names: ds.channel_names.clone(),
            split_fractions: ds.split_fractions,
        })
    }

    /// Inverse of [`standardize`]: back to original units.
    pub fn inverse_standardize(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        self.check(ds, "inverse_standardize")?;
        let mut values = ds.values.clone();
        for t in 0..values.rows() {
            let row = values.row_mut(t);
            for (ch, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[ch] + self.mean[ch];
            }
        }
        Ok(TimeSeriesDataset {
            values,
            channel_names: ds.channel_names.clone(),
            split_fractions: ds.split_fractions,
        })
    }
}

/// Load a CSV file: UTF-8, comma-separated, one header row, optional leading
/// time column. Columns become channels in header order.
pub fn load_csv(path: impl AsRef<Path>, has_time_column: bool) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let path_str = path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| Error::Csv {
        path: path_str.clone(),
        line: 1,
        msg: "empty file, expected a header row".into(),
    })?;
    let mut names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if has_time_column {
        if names.len() < 2 {
            return Err(Error::Csv {
                path: path_str,
                line: 1,
                msg: "header has no value columns after the time column".into(),
            });
        }
        names.remove(0);
    }
    let c = names.len();
    if c == 0 {
        return Err(Error::Csv {
            path: path_str,
            line: 1,
            msg: "header has no columns".into(),
        });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut prev_time: Option<f64> = None;
    for (idx, line) in lines {
        let line_no = idx + 1; // 1-based, header is line 1
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        if has_time_column {
            let cell = cells.next().unwrap_or("");
            // validated as strictly increasing when it parses as a number
            if let Ok(t) = cell.trim().parse::<f64>() {
                if let Some(p) = prev_time {
                    if t <= p {
                        return Err(Error::Csv {
                            path: path_str,
                            line: line_no,
                            msg: format!("time column not strictly increasing: {t} after {p}"),
                        });
                    }
                }
                prev_time = Some(t);
            }
        }
        let mut row = Vec::with_capacity(c);
        for (col, cell) in cells.enumerate() {
            if col >= c {
                break; // length checked below
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                path: path_str.clone(),
                line: line_no,
                msg: format!(
                    "non-numeric cell {:?} in column {}",
                    cell.trim(),
                    names[col]
                ),
            })?;
            row.push(v);
        }
        let n_cells = line.split(',').count() - usize::from(has_time_column);
        if n_cells != c {
            return Err(Error::Csv {
                path: path_str,
                line: line_no,
                msg: format!("ragged row: {n_cells} value cells, expected {c}"),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv {
            path: path_str,
            line: 1,
            msg: "no data rows".into(),
        });
    }
    let values = Matrix::from_rows(&rows)?;
    TimeSeriesDataset::with_default_splits(values, names)
}

/// Write a dataset as CSV with a leading integer time column. Floats are
/// printed in shortest round-trip form, so `load_csv` recovers them exactly.
pub fn write_csv(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    write!(file, "t")?;
    for name in &ds.channel_names {
        write!(file, ",{name}")?;
    }
    writeln!(file)?;
    for t in 0..ds.total_len() {
        write!(file, "{t}")?;
        for v in ds.values.row(t) {
            write!(file, ",{v}")?;
        }
        writeln!(file)?;
    }
    file.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_direct_parse() {
        let f = write_temp("date,a,b\n1,0.5,1.5\n2,-1.0,2.0\n3,0.0,3.25\n");
        let ds = load_csv(f.path(), true).unwrap();
        assert_eq!(ds.total_len(), 3);
        assert_eq!(ds.channels(), 2);
        assert_eq!(ds.channel_names, vec!["a", "b"]);
        assert_eq!(ds.values.get(0, 0), 0.5);
        assert_eq!(ds.values.get(2, 1), 3.25);
    }

    #[test]
    fn load_csv_ragged_row_names_line() {
        let f = write_temp("a,b\n1.0,2.0\n3.0\n");
        let err = load_csv(f.path(), false).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("line 3") && msg.contains("ragged"),
            "msg: {msg}"
        );
    }

    #[test]
    fn load_csv_non_numeric_cell_names_column() {
        let f = write_temp("a,b\n1.0,2.0\n3.0,oops\n");
        let err = load_csv(f.path(), false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains('b'), "msg: {msg}");
    }

    #[test]
    fn load_csv_rejects_empty_and_missing() {
        let f = write_temp("a,b\n");
        assert!(load_csv(f.path(), false).is_err());
        assert!(load_csv("/definitely/not/here.csv", false).is_err());
    }

    #[test]
    fn load_csv_time_column_must_increase() {
        let f = write_temp("t,a,b\n1,0.0,0.0\n1,1.0,1.0\n");
        let err = load_csv(f.path(), true).unwrap_err();
        assert!(err.to_string().contains("strictly increasing"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let cfg = SynthConfig::new(3, 128, 7);
        let ds = generate_synthetic(&cfg).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path()).unwrap();
        let back = load_csv(f.path(), true).unwrap();
        assert_eq!(back.values, ds.values);
        assert_eq!(back.channel_names, ds.channel_names);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig::new(4, 256, 99);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn synthetic_homogeneous_channels_equal_latent() {
        let mut cfg = SynthConfig::new(3, 128, 5);
        cfg.hetero_amp = 0.0;
        cfg.noise_sigma = 0.0;
        cfg.shared_amp = 1.0;
        let ds = generate_synthetic(&cfg).unwrap();
        for t in 0..ds.total_len() {
            let row = ds.values.row(t);
            assert_eq!(row[0], row[1]);
            assert_eq!(row[0], row[2]);
        }
    }

    #[test]
    fn synthetic_pure_sinusoids_peak_at_drawn_frequency() {
        let mut cfg = SynthConfig::new(2, 1024, 31);
        cfg.shared_amp = 0.0;
        cfg.noise_sigma = 0.0;
        let ds = generate_synthetic(&cfg).unwrap();
        let n = ds.total_len();

        // Recover the drawn frequencies by replaying the generator's draw order.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut freqs = Vec::new();
        for _ in 0..cfg.channels {
            freqs.push(rng.gen_range(cfg.freq_range.0..cfg.freq_range.1));
            let _phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        }
        assert!(
            (freqs[0] - freqs[1]).abs() > 1e-6,
            "frequencies should differ"
        );

        // Naive periodogram oracle.
        for ch in 0..2 {
            let series = ds.values.col(ch);
            let mut best_k = 0;
            let mut best_power = -1.0;
            for k in 1..n / 2 {
                let w = std::f64::consts::TAU * k as f64 / n as f64;
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in series.iter().enumerate() {
                    re += v * (w * t as f64).cos();
                    im -= v * (w * t as f64).sin();
                }
                let power = re * re + im * im;
                if power > best_power {
                    best_power = power;
                    best_k = k;
                }
            }
            let expected = (freqs[ch] * n as f64).round() as i64;
            assert!(
                (best_k as i64 - expected).abs() <= 1,
                "channel {ch}: peak bin {best_k}, expected near {expected}"
            );
        }
    }

    #[test]
    fn shared_latent_autocorrelation_near_ar1_coefficient() {
        let mut cfg = SynthConfig::new(2, 4096, 17);
        cfg.hetero_amp = 0.0;
        cfg.noise_sigma = 0.0;
        cfg.shared_amp = 1.0;
        let ds = generate_synthetic(&cfg).unwrap();
        let g = ds.values.col(0);
        let n = g.len();
        let mean = g.iter().sum::<f64>() / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 0..n {
            let d = g[t] - mean;
            den += d * d;
            if t + 1 < n {
                num += d * (g[t + 1] - mean);
            }
        }
        let r1 = num / den;
        assert!(
            (r1 - SHARED_LATENT_AR1).abs() < 0.05,
            "lag-1 autocorrelation {r1} too far from {SHARED_LATENT_AR1}"
        );
    }

    #[test]
    fn window_counting_formula() {
        // train region [0, 10): 10 - 4 - 2 + 1 = 5 samples
        let values = Matrix::from_fn(20, 2, || 1.0);
        let ds = TimeSeriesDataset::new(values, vec!["a".into(), "b".into()], (0.5, 0.25, 0.25))
            .unwrap();
        let windows = make_windows(&ds, 4, 2, Split::Train).unwrap();
        assert_eq!(windows.len(), 5);
    }

    #[test]
    fn window_boundary_exactly_one_sample() {
        let values = Matrix::from_fn(12, 1, || 0.0);
        let ds = TimeSeriesDataset::new(values, vec!["a".into()], (0.5, 0.25, 0.25)).unwrap();
        // train region [0, 6), lookback 4 + horizon 2 = 6 -> exactly 1
        let windows = make_windows(&ds, 4, 2, Split::Train).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].origin_index, 0);
    }

    #[test]
    fn window_region_too_short_is_explicit() {
        let values = Matrix::from_fn(12, 1, || 0.0);
        let ds = TimeSeriesDataset::new(values, vec!["a".into()], (0.5, 0.25, 0.25)).unwrap();
        let err = make_windows(&ds, 5, 2, Split::Train).unwrap_err();
        assert!(err.to_string().contains("at least 7"), "msg: {err}");
    }

    #[test]
    fn window_slices_match_source() {
        let cfg = SynthConfig::new(3, 128, 2);
        let ds = generate_synthetic(&cfg).unwrap();
        for split in [Split::Train, Split::Val, Split::Test] {
            let windows = make_windows(&ds, 8, 4, split).unwrap();
            let (start, end) = ds.split_range(split);
            for w in &windows {
                assert!(w.origin_index >= start);
                assert!(
                    w.origin_index + 8 + 4 <= end,
                    "window crosses split boundary"
                );
                for t in 0..8 {
                    assert_eq!(w.x.row(t), ds.values.row(w.origin_index + t));
                }
                for h in 0..4 {
                    assert_eq!(w.y.row(h), ds.values.row(w.origin_index + 8 + h));
                }
            }
        }
    }

    #[test]
    fn standardizer_train_split_moments() {
        let cfg = SynthConfig::new(3, 512, 13);
        let ds = generate_synthetic(&cfg).unwrap();
        let stats = Standardizer::fit(&ds);
        let z = stats.standardize(&ds).unwrap();
        let (start, end) = z.split_range(Split::Train);
        let n = (end - start) as f64;
        for ch in 0..z.channels() {
            let mut mean = 0.0;
            for t in start..end {
                mean += z.values.get(t, ch);
            }
            mean /= n;
            let mut var = 0.0;
            for t in start..end {
                let d = z.values.get(t, ch) - mean;
                var += d * d;
            }
            let std = (var / n).sqrt();
            assert!(mean.abs() < 1e-10, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-8, "std {std}");
        }
    }

    #[test]
    fn standardizer_inverse_recovers_input() {
        let cfg = SynthConfig::new(4, 256, 3);
        let ds = generate_synthetic(&cfg).unwrap();
        let stats = Standardizer::fit(&ds);
        let z = stats.standardize(&ds).unwrap();
        let back = stats.inverse_standardize(&z).unwrap();
        assert!(back.values.max_abs_diff(&ds.values) < 1e-10);
    }

    #[test]
    fn standardizer_constant_channel_floors_std() {
        let mut values = Matrix::zeros(100, 2);
        for t in 0..100 {
            values.set(t, 0, 5.0);
            values.set(t, 1, t as f64);
        }
        let ds =
            TimeSeriesDataset::with_default_splits(values, vec!["a".into(), "b".into()]).unwrap();
        let stats = Standardizer::fit(&ds);
        assert_eq!(stats.std[0], STD_FLOOR);
        let z = stats.standardize(&ds).unwrap();
        for t in 0..100 {
            assert_eq!(z.values.get(t, 0), 0.0);
        }
    }

    #[test]
    fn standardizer_ignores_test_split() {
        let cfg = SynthConfig::new(2, 256, 8);
        let ds = generate_synthetic(&cfg).unwrap();
        let stats = Standardizer::fit(&ds);
        let mut perturbed = ds.clone();
        let (test_start, test_end) = ds.split_range(Split::Test);
        for t in test_start..test_end {
            for ch in 0..perturbed.channels() {
                let v = perturbed.values.get(t, ch);
                perturbed.values.set(t, ch, v + 1000.0);
            }
        }
        let stats2 = Standardizer::fit(&perturbed);
        assert_eq!(stats, stats2);
    }

    #[test]
    fn standardizer_channel_mismatch() {
        let cfg = SynthConfig::new(2, 128, 8);
        let ds = generate_synthetic(&cfg).unwrap();
        let cfg3 = SynthConfig::new(3, 128, 8);
        let ds3 = generate_synthetic(&cfg3).unwrap();
        let stats = Standardizer::fit(&ds);
        assert!(stats.standardize(&ds3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn windows_never_cross_split_boundaries(seed in 0u64..50) {
            let cfg = SynthConfig::new(2, 200, seed);
            let ds = generate_synthetic(&cfg).unwrap();
            let (_, train_end) = ds.split_range(Split::Train);
            let windows = make_windows(&ds, 10, 5, Split::Train).unwrap();
            let max_origin = windows.iter().map(|w| w.origin_index).max().unwrap();
            proptest::prop_assert!(max_origin + 10 + 5 <= train_end);
        }
    }
}

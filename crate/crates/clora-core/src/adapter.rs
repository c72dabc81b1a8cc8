//! Channel-aware low-rank adaptation.
//!
//! Each channel c owns a small factor `phi_c` (rank x embed_dim); one matrix
//! `w` (rank x adapt_dim) is shared by all channels. The effective adapter
//! `relu(phi_c^T w)` maps a channel's token to an extra `adapt_dim`-wide
//! slice that is concatenated onto the shared embedding, injecting channel
//! identity at a parameter cost of `C*r*D + r*d` instead of a full
//! per-channel predictor.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{EmbeddingMode, ModelConfig};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-channel low-rank factors plus the shared projection.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterBank {
    /// One `rank x embed_dim` factor per channel.
    pub phi: Vec<Matrix>,
    /// `rank x adapt_dim`, shared across channels.
    pub w: Matrix,
}

impl AdapterBank {
    /// Small-Gaussian init on both factors. A zero init of either side
    /// would zero every adapter gradient at step 0 through the ReLU mask,
    /// so both factors start non-zero.
    pub fn init(
        channels: usize,
        rank: usize,
        embed_dim: usize,
        adapt_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let phi_dist = Normal::new(0.0, 1.0 / (rank as f64).sqrt()).unwrap();
        let w_dist = Normal::new(0.0, 1.0 / (adapt_dim as f64).sqrt()).unwrap();
        let phi = (0..channels)
            .map(|_| Matrix::from_fn(rank, embed_dim, || phi_dist.sample(rng)))
            .collect();
        let w = Matrix::from_fn(rank, adapt_dim, || w_dist.sample(rng));
        AdapterBank { phi, w }
    }

    pub fn zeros(channels: usize, rank: usize, embed_dim: usize, adapt_dim: usize) -> Self {
        AdapterBank {
            phi: (0..channels)
                .map(|_| Matrix::zeros(rank, embed_dim))
                .collect(),
            w: Matrix::zeros(rank, adapt_dim),
        }
    }

    pub fn channels(&self) -> usize {
        self.phi.len()
    }

    pub fn rank(&self) -> usize {
        self.w.rows()
    }

    pub fn adapt_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.phi.iter().map(|p| p.rows() * p.cols()).sum::<usize>() + self.w.rows() * self.w.cols()
    }
}

/// `relu(phi_c^T w)`: the dense `embed_dim x adapt_dim` map a channel
/// applies to its token. The pre-ReLU product has rank at most `rank`.
pub fn effective_adapter(phi_c: &Matrix, w: &Matrix) -> Result<Matrix> {
    if phi_c.rows() != w.rows() {
        return Err(Error::shape(
            "effective_adapter",
            format!("phi rank {}", phi_c.rows()),
            format!("w rank {}", w.rows()),
        ));
    }
    Ok(phi_c.transpose().matmul(w)?.relu())
}

/// Condition the adapter on the token itself: `z_c^T phi_tilde_c`,
/// a row vector of length `adapt_dim`. A zero token yields zero adaptation.
pub fn apply_adapter(z_c: &[f64], phi_tilde_c: &Matrix) -> Result<Vec<f64>> {
    if z_c.len() != phi_tilde_c.rows() {
        return Err(Error::shape(
            "apply_adapter",
            format!("token width {}", z_c.len()),
            format!("adapter rows {}", phi_tilde_c.rows()),
        ));
    }
    let d = phi_tilde_c.cols();
    let mut out = vec![0.0; d];
    for (i, &zi) in z_c.iter().enumerate() {
        let row = phi_tilde_c.row(i);
        for j in 0..d {
            out[j] += zi * row[j];
        }
    }
    Ok(out)
}

/// Concatenate each token with its channel's adaptation:
/// row c of the result is `[z_tok_c || z_tok_c^T relu(phi_c^T w)]`.
/// The first `embed_dim` columns equal `z_tok` bitwise.
pub fn assemble_embedding(z_tok: &Matrix, bank: &AdapterBank) -> Result<Matrix> {
    let c = z_tok.rows();
    if bank.channels() != c {
        return Err(Error::shape(
            "assemble_embedding",
            format!("{} token rows", c),
            format!("{} adapter channels", bank.channels()),
        ));
    }
    let d_embed = z_tok.cols();
    let d_adapt = bank.adapt_dim();
    let mut out = Matrix::zeros(c, d_embed + d_adapt);
    for ch in 0..c {
        let phi_tilde = effective_adapter(&bank.phi[ch], &bank.w)?;
        let z_phi = apply_adapter(z_tok.row(ch), &phi_tilde)?;
        let row = out.row_mut(ch);
        row[..d_embed].copy_from_slice(z_tok.row(ch));
        row[d_embed..].copy_from_slice(&z_phi);
    }
    Ok(out)
}

/// Parameters added by the adapter: `C*rank*embed_dim + rank*adapt_dim`.
pub fn extra_param_count(config: &ModelConfig) -> usize {
    config.channels * config.rank * config.embed_dim + config.rank * config.adapt_dim
}

/// Total trainable parameters for a config, by exact enumeration of every
/// matrix the parameter set would hold.
pub fn total_param_count(config: &ModelConfig) -> usize {
    let mut total = config.embedding_param_count();
    total += config.effective_layers() * config.mixing_block_param_count();
    total += config.projection_param_count();
    if config.adapter_enabled {
        total += extra_param_count(config);
    }
    total
}

/// The three channel strategies compared by parameter cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// One shared predictor for all channels.
    Shared,
    /// A distinct embedding map per channel.
    PerChannel,
    /// Shared predictor plus the channel adapter.
    SharedAdapted,
}

/// Param totals of the three strategies on otherwise identical shapes.
pub fn strategy_param_counts(base: &ModelConfig) -> [(Strategy, usize); 3] {
    let mut shared = *base;
    shared.embedding = EmbeddingMode::Shared;
    shared.adapter_enabled = false;
    let mut per_channel = *base;
    per_channel.embedding = EmbeddingMode::PerChannel;
    per_channel.adapter_enabled = false;
    let mut adapted = *base;
    adapted.embedding = EmbeddingMode::Shared;
    adapted.adapter_enabled = true;
    [
        (Strategy::Shared, total_param_count(&shared)),
        (Strategy::PerChannel, total_param_count(&per_channel)),
        (Strategy::SharedAdapted, total_param_count(&adapted)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MixingMode;
    use rand::{Rng, SeedableRng};

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_phi_gives_zero_adapter() {
        let phi = Matrix::zeros(3, 5);
        let w = seeded_matrix(3, 2, 1);
        let eff = effective_adapter(&phi, &w).unwrap();
        assert_eq!(eff, Matrix::zeros(5, 2));
    }

    #[test]
    fn hand_example_rank_one() {
        // phi = [[2, -1]], w = [[1, -1]]
        // phi^T w = [[2, -2], [-1, 1]], relu -> [[2, 0], [0, 1]]
        let phi = Matrix::from_rows(&[vec![2.0, -1.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let eff = effective_adapter(&phi, &w).unwrap();
        let expected = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(eff, expected);
    }

    #[test]
    fn rank_mismatch_rejected() {
        let phi = Matrix::zeros(3, 5);
        let w = Matrix::zeros(2, 4);
        assert!(effective_adapter(&phi, &w).is_err());
    }

    #[test]
    fn pre_relu_product_stays_in_phi_column_space() {
        // columns of phi^T w must be combinations of the columns of phi^T;
        // projecting them onto that column space leaves no residual.
        let r = 2;
        let d_embed = 8;
        let d_adapt = 8;
        let phi = seeded_matrix(r, d_embed, 7);
        let w = seeded_matrix(r, d_adapt, 8);
        let m = phi.transpose().matmul(&w).unwrap(); // pre-relu, D x d

        // Solve the r x r normal equations phi phi^T a = phi m_col per column.
        let phi_t = phi.transpose();
        let gram = phi.matmul(&phi_t).unwrap(); // r x r
        let rhs = phi.matmul(&m).unwrap(); // r x d
                                           // Gaussian elimination on the tiny system.
        let mut a = vec![vec![0.0; d_adapt]; r];
        let mut g: Vec<Vec<f64>> = (0..r).map(|i| gram.row(i).to_vec()).collect();
        let mut b: Vec<Vec<f64>> = (0..r).map(|i| rhs.row(i).to_vec()).collect();
        for col in 0..r {
            let pivot = (col..r)
                .max_by(|&i, &j| g[i][col].abs().partial_cmp(&g[j][col].abs()).unwrap())
                .unwrap();
            g.swap(col, pivot);
            b.swap(col, pivot);
            let p = g[col][col];
            assert!(p.abs() > 1e-12, "gram matrix singular");
            for i in 0..r {
                if i != col {
                    let f = g[i][col] / p;
                    for j in 0..r {
                        g[i][j] -= f * g[col][j];
                    }
                    for j in 0..d_adapt {
                        b[i][j] -= f * b[col][j];
                    }
                }
            }
        }
        for i in 0..r {
            for j in 0..d_adapt {
                a[i][j] = b[i][j] / g[i][i];
            }
        }
        // residual = m - phi^T a
        let a_mat = Matrix::from_rows(&a).unwrap();
        let reconstructed = phi_t.matmul(&a_mat).unwrap();
        assert!(
            m.max_abs_diff(&reconstructed) < 1e-10,
            "rank exceeds the adapter rank"
        );
    }

    #[test]
    fn zero_token_zero_adaptation() {
        let phi_tilde = seeded_matrix(6, 3, 2);
        let out = apply_adapter(&[0.0; 6], &phi_tilde).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn column_selector_picks_coordinates() {
        // one 1 per column: column j selects coordinate perm[j] of z
        let mut sel = Matrix::zeros(4, 3);
        sel.set(2, 0, 1.0);
        sel.set(0, 1, 1.0);
        sel.set(3, 2, 1.0);
        let z = [10.0, 20.0, 30.0, 40.0];
        let out = apply_adapter(&z, &sel).unwrap();
        assert_eq!(out, vec![30.0, 10.0, 40.0]);
    }

    #[test]
    fn apply_adapter_matches_per_column_dot_oracle() {
        let z: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let phi_tilde = seeded_matrix(8, 5, 3);
        let out = apply_adapter(&z, &phi_tilde).unwrap();
        for j in 0..5 {
            let mut dot = 0.0;
            for i in 0..8 {
                dot += z[i] * phi_tilde.get(i, j);
            }
            assert!((out[j] - dot).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let phi_tilde = Matrix::zeros(4, 2);
        assert!(apply_adapter(&[1.0; 5], &phi_tilde).is_err());
    }

    #[test]
    fn null_bank_appends_zeros() {
        let z_tok = seeded_matrix(3, 6, 4);
        let bank = AdapterBank::zeros(3, 2, 6, 2);
        let out = assemble_embedding(&z_tok, &bank).unwrap();
        assert_eq!(out.rows(), 3);
        assert_eq!(out.cols(), 8);
        for ch in 0..3 {
            assert_eq!(&out.row(ch)[..6], z_tok.row(ch));
            assert_eq!(&out.row(ch)[6..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn identical_tokens_distinct_adapters_differ_in_tail() {
        let mut z_tok = Matrix::zeros(2, 6);
        for j in 0..6 {
            z_tok.set(0, j, 0.3 * j as f64 + 0.1);
            z_tok.set(1, j, 0.3 * j as f64 + 0.1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bank = AdapterBank::init(2, 2, 6, 3, &mut rng);
        assert_ne!(bank.phi[0], bank.phi[1]);
        let out = assemble_embedding(&z_tok, &bank).unwrap();
        assert_eq!(&out.row(0)[..6], &out.row(1)[..6]);
        assert_ne!(
            &out.row(0)[6..],
            &out.row(1)[6..],
            "channel identity missing"
        );
    }

    #[test]
    fn concatenation_prefix_is_bitwise_token() {
        let z_tok = seeded_matrix(4, 5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let bank = AdapterBank::init(4, 2, 5, 3, &mut rng);
        let out = assemble_embedding(&z_tok, &bank).unwrap();
        for ch in 0..4 {
            for j in 0..5 {
                assert!(out.get(ch, j).to_bits() == z_tok.get(ch, j).to_bits());
            }
        }
    }

    #[test]
    fn channel_count_mismatch_rejected() {
        let z_tok = Matrix::zeros(3, 5);
        let bank = AdapterBank::zeros(2, 2, 5, 2);
        assert!(assemble_embedding(&z_tok, &bank).is_err());
    }

    #[test]
    fn extra_count_reference_values() {
        let mut cfg = ModelConfig::baseline(96, 24, 321);
        cfg.embed_dim = 128;
        cfg.rank = 4;
        cfg.adapt_dim = 16;
        cfg.adapter_enabled = true;
        assert_eq!(extra_param_count(&cfg), 164_416);

        let mut tiny = ModelConfig::baseline(8, 2, 1);
        tiny.embed_dim = 1;
        tiny.rank = 1;
        tiny.adapt_dim = 1;
        tiny.adapter_enabled = true;
        assert_eq!(extra_param_count(&tiny), 2);
    }

    #[test]
    fn strategy_ordering_per_channel_most_expensive() {
        let mut cfg = ModelConfig::baseline(96, 24, 321);
        cfg.embed_dim = 128;
        let counts = strategy_param_counts(&cfg);
        let shared = counts[0].1;
        let per_channel = counts[1].1;
        let adapted = counts[2].1;
        assert!(per_channel > adapted, "{per_channel} <= {adapted}");
        assert!(adapted > shared, "{adapted} <= {shared}");
        // embedding weights alone dominate: ratio over 20x
        let cind_embed = 321 * (96 * 128 + 128);
        let adapted_embed = 96 * 128 + 128 + 164_416;
        assert_eq!(cind_embed, 3_985_536);
        assert!(cind_embed as f64 / adapted_embed as f64 > 20.0);
    }

    #[test]
    fn bank_param_count_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bank = AdapterBank::init(7, 3, 10, 4, &mut rng);
        assert_eq!(bank.param_count(), 7 * 3 * 10 + 3 * 4);
    }

    #[test]
    fn mixing_depth_counts_once_per_layer() {
        let mut cfg = ModelConfig::baseline(24, 8, 4);
        cfg.mixing = MixingMode::MlpMix;
        cfg.layers = 3;
        let one_block = cfg.mixing_block_param_count();
        let with_blocks = total_param_count(&cfg);
        cfg.layers = 0;
        let without = total_param_count(&cfg);
        assert_eq!(with_blocks - without, 3 * one_block);
    }
}

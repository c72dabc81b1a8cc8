//! Forward pass of the forecasting template and its analytic backward pass.
//!
//! Pipeline: per-window normalization, token embedding (one token per
//! channel), optional adapter concatenation, L mixing blocks, projection to
//! the horizon, denormalization. The backward pass is written by hand
//! against the cached intermediates; every gradient is validated against
//! central finite differences in the tests.

use crate::adapter::assemble_embedding;
use crate::config::{MixingMode, ModelConfig};
use crate::error::{Error, Result};
use crate::matrix::{matmul_acc, Matrix};
use crate::params::{Affine, Embedding, MixBlock, ParamSet};
use crate::revin::{revin_denormalize, revin_normalize, RevInState};

/// Add a `1 x cols` bias row to every row of `m`.
fn add_row_bias(m: &mut Matrix, b: &Matrix) {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        for (v, &bias) in row.iter_mut().zip(b.row(0)) {
            *v += bias;
        }
    }
}

/// Add a `1 x rows` bias across rows: entry (i, j) gains `b[0][i]`.
fn add_col_bias(m: &mut Matrix, b: &Matrix) {
    for i in 0..m.rows() {
        let bias = b.get(0, i);
        for v in m.row_mut(i) {
            *v += bias;
        }
    }
}

/// Gradient through ReLU: pass where the pre-activation was positive.
fn relu_backward(d: &Matrix, pre: &Matrix) -> Matrix {
    let mut out = d.clone();
    for (v, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn col_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (s, &v) in out.row_mut(0).iter_mut().zip(m.row(i)) {
            *s += v;
        }
    }
    out
}

fn row_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.rows());
    for i in 0..m.rows() {
        out.set(0, i, m.row(i).iter().sum());
    }
    out
}

/// Row-wise softmax with max subtraction for stability.
fn softmax_rows(s: &Matrix) -> Matrix {
    let mut out = s.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Map each channel's normalized look-back to a token:
/// `relu(xbar[:,c]^T w + b)` with either the shared map or channel c's map.
pub fn token_embed(xbar: &Matrix, embed: &Embedding) -> Result<Matrix> {
    let (_, z_tok) = embed_with_pre(&xbar.transpose(), embed)?;
    Ok(z_tok)
}

/// Internal embedding over `xbar_t` (C x T rows). Returns pre-activation
/// and activated tokens.
fn embed_with_pre(xbar_t: &Matrix, embed: &Embedding) -> Result<(Matrix, Matrix)> {
    let z_pre = match embed {
        Embedding::Shared(a) => {
            let mut z = xbar_t.matmul(&a.w)?;
            add_row_bias(&mut z, &a.b);
            z
        }
        Embedding::PerChannel(maps) => {
            if maps.len() != xbar_t.rows() {
                return Err(Error::shape(
                    "token_embed",
                    format!("{} channels", xbar_t.rows()),
                    format!("{} embedding maps", maps.len()),
                ));
            }
            let d = maps[0].w.cols();
            let mut z = Matrix::zeros(xbar_t.rows(), d);
            for (c, map) in maps.iter().enumerate() {
                let xc = Matrix::from_rows(&[xbar_t.row(c).to_vec()])?;
                let mut row = xc.matmul(&map.w)?;
                add_row_bias(&mut row, &map.b);
                z.row_mut(c).copy_from_slice(row.row(0));
            }
            z
        }
    };
    let z_tok = z_pre.relu();
    Ok((z_pre, z_tok))
}

/// Intermediates of one mixing block, kept for the backward pass.
#[derive(Debug, Clone)]
pub enum BlockCache {
    Mlp {
        input: Matrix,
        a1: Matrix,
        z1: Matrix,
        a2: Matrix,
    },
    Attn {
        input: Matrix,
        q: Matrix,
        k: Matrix,
        v: Matrix,
        /// Row-stochastic C x C attention matrix, exposed for inspection.
        attn: Matrix,
        o: Matrix,
    },
}

fn mix_block_forward(z: &Matrix, block: &MixBlock) -> Result<(Matrix, BlockCache)> {
    match block {
        MixBlock::MlpMix { channel, feature } => {
            let mut a1 = channel.w.matmul(z)?;
            add_col_bias(&mut a1, &channel.b);
            let z1 = z.add(&a1.relu())?;
            let mut a2 = z1.matmul(&feature.w)?;
            add_row_bias(&mut a2, &feature.b);
            let out = z1.add(&a2.relu())?;
            Ok((
                out,
                BlockCache::Mlp {
                    input: z.clone(),
                    a1,
                    z1,
                    a2,
                },
            ))
        }
        MixBlock::Attention { wq, wk, wv, wo } => {
            let scale = 1.0 / (z.cols() as f64).sqrt();
            let q = z.matmul(wq)?;
            let k = z.matmul(wk)?;
            let v = z.matmul(wv)?;
            let attn = softmax_rows(&q.matmul(&k.transpose())?.scale(scale));
            let o = attn.matmul(&v)?;
            let out = z.add(&o.matmul(wo)?)?;
            Ok((
                out,
                BlockCache::Attn {
                    input: z.clone(),
                    q,
                    k,
                    v,
                    attn,
                    o,
                },
            ))
        }
    }
}

/// One cross-channel interaction step. Errors when called with
/// `mixing = none`, which instantiates no blocks.
pub fn channel_mixing_block(z: &Matrix, block: &MixBlock, mode: MixingMode) -> Result<Matrix> {
    match (mode, block) {
        (MixingMode::None, _) => Err(Error::Config(
            "channel_mixing_block called with mixing = none".into(),
        )),
        (MixingMode::MlpMix, MixBlock::MlpMix { .. })
        | (MixingMode::Attention, MixBlock::Attention { .. }) => Ok(mix_block_forward(z, block)?.0),
        _ => Err(Error::Config(
            "mixing mode does not match block parameters".into(),
        )),
    }
}

/// Map each channel token to the horizon: `z_c^T w + b`, transposed to H x C.
pub fn project(z: &Matrix, proj: &Affine) -> Result<Matrix> {
    let mut y_ct = z.matmul(&proj.w)?;
    add_row_bias(&mut y_ct, &proj.b);
    Ok(y_ct.transpose())
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub state: RevInState,
    xbar_t: Matrix,
    z_pre: Matrix,
    z_tok: Matrix,
    /// Per channel: pre-ReLU `phi_c^T w` and its activation.
    adapter_pre: Vec<Matrix>,
    adapter_eff: Vec<Matrix>,
    blocks: Vec<BlockCache>,
    z_final: Matrix,
}

impl ForwardCache {
    /// Attention matrices of the attention blocks, outermost first.
    pub fn attention_maps(&self) -> Vec<&Matrix> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                BlockCache::Attn { attn, .. } => Some(attn),
                _ => None,
            })
            .collect()
    }
}

fn check_shapes(x: &Matrix, params: &ParamSet, config: &ModelConfig) -> Result<()> {
    config.validate()?;
    if x.rows() != config.lookback || x.cols() != config.channels {
        return Err(Error::shape(
            "forward",
            format!("input {}x{}", x.rows(), x.cols()),
            format!("config {}x{}", config.lookback, config.channels),
        ));
    }
    let de = config.effective_dim();
    if params.proj.w.rows() != de || params.proj.w.cols() != config.horizon {
        return Err(Error::shape(
            "forward",
            format!(
                "projection {}x{}",
                params.proj.w.rows(),
                params.proj.w.cols()
            ),
            format!("config {}x{}", de, config.horizon),
        ));
    }
    if params.blocks.len() != config.effective_layers() {
        return Err(Error::shape(
            "forward",
            format!("{} mixing blocks", params.blocks.len()),
            format!("config depth {}", config.effective_layers()),
        ));
    }
    match (&params.adapters, config.adapter_enabled) {
        (Some(bank), true) => {
            if bank.channels() != config.channels
                || bank.rank() != config.rank
                || bank.adapt_dim() != config.adapt_dim
            {
                return Err(Error::shape(
                    "forward",
                    format!(
                        "adapter {}ch r{} d{}",
                        bank.channels(),
                        bank.rank(),
                        bank.adapt_dim()
                    ),
                    format!(
                        "config {}ch r{} d{}",
                        config.channels, config.rank, config.adapt_dim
                    ),
                ));
            }
        }
        (None, false) => {}
        _ => {
            return Err(Error::Config(
                "parameter set and config disagree about the adapter".into(),
            ))
        }
    }
    Ok(())
}

/// Full forward pass, returning the denormalized `H x C` forecast and the
/// cache consumed by [`backward`]. Pure: equal inputs give equal outputs.
pub fn forward_cached(
    x: &Matrix,
    params: &ParamSet,
    config: &ModelConfig,
) -> Result<(Matrix, ForwardCache)> {
    check_shapes(x, params, config)?;
    let (xbar, state) = revin_normalize(x)?;
    let xbar_t = xbar.transpose();
    let (z_pre, z_tok) = embed_with_pre(&xbar_t, &params.embed)?;

    let mut adapter_pre = Vec::new();
    let mut adapter_eff = Vec::new();
    let z0 = if let Some(bank) = &params.adapters {
        for phi in &bank.phi {
            let pre = phi.transpose().matmul(&bank.w)?;
            adapter_eff.push(pre.relu());
            adapter_pre.push(pre);
        }
        assemble_embedding(&z_tok, bank)?
    } else {
        z_tok.clone()
    };

    let mut z = z0;
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (next, cache) = mix_block_forward(&z, block)?;
        blocks.push(cache);
        z = next;
    }
    let z_final = z;

    let y_norm = project(&z_final, &params.proj)?;
    let y = revin_denormalize(&y_norm, &state)?;
    let cache = ForwardCache {
        state,
        xbar_t,
        z_pre,
        z_tok,
        adapter_pre,
        adapter_eff,
        blocks,
        z_final,
    };
    Ok((y, cache))
}

/// Forward pass without keeping intermediates.
pub fn forward(x: &Matrix, params: &ParamSet, config: &ModelConfig) -> Result<Matrix> {
    Ok(forward_cached(x, params, config)?.0)
}

/// Accumulate parameter gradients for one sample into `grads`, given
/// `d_y` = dLoss/dForecast on the denormalized output. `grads` must be
/// structured like `params` (see [`ParamSet::zeros_like`]). Input
/// gradients are not propagated; normalization statistics are treated as
/// constants of the input window.
pub fn backward(
    d_y: &Matrix,
    params: &ParamSet,
    cache: &ForwardCache,
    grads: &mut ParamSet,
) -> Result<()> {
    // denormalization: y = y_norm * std_c + mean_c
    let mut d_y_norm = d_y.clone();
    for h in 0..d_y_norm.rows() {
        let row = d_y_norm.row_mut(h);
        for (c, v) in row.iter_mut().enumerate() {
            *v *= cache.state.std[c];
        }
    }
    // projection
    let d_y_ct = d_y_norm.transpose();
    matmul_acc(&cache.z_final.transpose(), &d_y_ct, &mut grads.proj.w);
    grads.proj.b.add_assign(&col_sums(&d_y_ct))?;
    let mut d_z = d_y_ct.matmul(&params.proj.w.transpose())?;

    // mixing blocks, last to first
    for ((block, gblock), bcache) in params
        .blocks
        .iter()
        .zip(grads.blocks.iter_mut())
        .zip(cache.blocks.iter())
        .rev()
    {
        match (block, gblock, bcache) {
            (
                MixBlock::MlpMix { channel, feature },
                MixBlock::MlpMix {
                    channel: g_channel,
                    feature: g_feature,
                },
                BlockCache::Mlp { input, a1, z1, a2 },
            ) => {
                let da2 = relu_backward(&d_z, a2);
                matmul_acc(&z1.transpose(), &da2, &mut g_feature.w);
                g_feature.b.add_assign(&col_sums(&da2))?;
                let d_z1 = d_z.add(&da2.matmul(&feature.w.transpose())?)?;
                let da1 = relu_backward(&d_z1, a1);
                matmul_acc(&da1, &input.transpose(), &mut g_channel.w);
                g_channel.b.add_assign(&row_sums(&da1))?;
                d_z = d_z1.add(&channel.w.transpose().matmul(&da1)?)?;
            }
            (
                MixBlock::Attention { wq, wk, wv, wo },
                MixBlock::Attention {
                    wq: g_wq,
                    wk: g_wk,
                    wv: g_wv,
                    wo: g_wo,
                },
                BlockCache::Attn {
                    input,
                    q,
                    k,
                    v,
                    attn,
                    o,
                },
            ) => {
                let scale = 1.0 / (input.cols() as f64).sqrt();
                let d_p = &d_z;
                matmul_acc(&o.transpose(), d_p, g_wo);
                let d_o = d_p.matmul(&wo.transpose())?;
                let d_attn = d_o.matmul(&v.transpose())?;
                let d_v = attn.transpose().matmul(&d_o)?;
                // softmax backward per row: ds = a * (da - <da, a>)
                let mut d_s = Matrix::zeros(attn.rows(), attn.cols());
                for i in 0..attn.rows() {
                    let a_row = attn.row(i);
                    let da_row = d_attn.row(i);
                    let dot: f64 = a_row.iter().zip(da_row).map(|(&a, &g)| a * g).sum();
                    let out = d_s.row_mut(i);
                    for j in 0..a_row.len() {
                        out[j] = a_row[j] * (da_row[j] - dot);
                    }
                }
                let d_q = d_s.matmul(k)?.scale(scale);
                let d_k = d_s.transpose().matmul(q)?.scale(scale);
                matmul_acc(&input.transpose(), &d_q, g_wq);
                matmul_acc(&input.transpose(), &d_k, g_wk);
                matmul_acc(&input.transpose(), &d_v, g_wv);
                let mut d_in = d_z.add(&d_q.matmul(&wq.transpose())?)?;
                d_in = d_in.add(&d_k.matmul(&wk.transpose())?)?;
                d_z = d_in.add(&d_v.matmul(&wv.transpose())?)?;
            }
            _ => {
                return Err(Error::Config(
                    "gradient accumulator does not match parameter structure".into(),
                ))
            }
        }
    }

    // adapter concatenation split
    let d_z_tok = match (&params.adapters, &mut grads.adapters) {
        (Some(bank), Some(g_bank)) => {
            let d_embed = cache.z_tok.cols();
            let d_adapt = bank.adapt_dim();
            let c = bank.channels();
            let mut d_tok = Matrix::zeros(c, d_embed);
            for ch in 0..c {
                let d_row = d_z.row(ch);
                let (d_tok_direct, d_phi_part) = d_row.split_at(d_embed);
                let eff = &cache.adapter_eff[ch];
                let pre = &cache.adapter_pre[ch];
                let z_row = cache.z_tok.row(ch);
                // token gets the direct slice plus the adapter path
                let out = d_tok.row_mut(ch);
                out.copy_from_slice(d_tok_direct);
                for i in 0..d_embed {
                    let eff_row = eff.row(i);
                    let mut acc = 0.0;
                    for j in 0..d_adapt {
                        acc += d_phi_part[j] * eff_row[j];
                    }
                    out[i] += acc;
                }
                // d_eff = z_row^T (outer) d_phi_part, masked by relu'
                let mut d_pre = Matrix::zeros(d_embed, d_adapt);
                for i in 0..d_embed {
                    if z_row[i] == 0.0 {
                        continue;
                    }
                    let pre_row = pre.row(i);
                    let dst = d_pre.row_mut(i);
                    for j in 0..d_adapt {
                        if pre_row[j] > 0.0 {
                            dst[j] = z_row[i] * d_phi_part[j];
                        }
                    }
                }
                // m = phi^T w: d_phi = w d_pre^T, d_w = phi d_pre
                matmul_acc(&bank.w, &d_pre.transpose(), &mut g_bank.phi[ch]);
                matmul_acc(&bank.phi[ch], &d_pre, &mut g_bank.w);
            }
            d_tok
        }
        (None, None) => d_z,
        _ => {
            return Err(Error::Config(
                "gradient accumulator does not match parameter structure".into(),
            ))
        }
    };

    // embedding
    let d_pre = relu_backward(&d_z_tok, &cache.z_pre);
    match (&params.embed, &mut grads.embed) {
        (Embedding::Shared(_), Embedding::Shared(g)) => {
            matmul_acc(&cache.xbar_t.transpose(), &d_pre, &mut g.w);
            g.b.add_assign(&col_sums(&d_pre))?;
        }
        (Embedding::PerChannel(maps), Embedding::PerChannel(g_maps)) => {
            for (c, g) in g_maps.iter_mut().enumerate() {
                let x_row = cache.xbar_t.row(c);
                let d_row = d_pre.row(c);
                for (i, &xv) in x_row.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let dst = g.w.row_mut(i);
                    for (j, &dv) in d_row.iter().enumerate() {
                        dst[j] += xv * dv;
                    }
                }
                let gb = g.b.row_mut(0);
                for (j, &dv) in d_row.iter().enumerate() {
                    gb[j] += dv;
                }
            }
            let _ = maps;
        }
        _ => {
            return Err(Error::Config(
                "gradient accumulator does not match parameter structure".into(),
            ))
        }
    }
    Ok(())
}

//! Checkpoint files: JSON containers that round-trip every f64 bit-exactly
//! by storing matrix data as fixed-width hex. Two kinds exist: a full
//! parameter set, and an adapter-only file for shipping fine-tuned adapters
//! without the backbone.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterBank;
use crate::config::ModelConfig;
use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::params::ParamSet;

const FORMAT: &str = "clora-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Full,
    AdapterOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredMatrix {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major entries, 16 lowercase hex digits per f64 (big-endian bits).
    data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredStandardizer {
    mean: Vec<String>,
    std: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    kind: CheckpointKind,
    config: ModelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    standardizer: Option<StoredStandardizer>,
    matrices: Vec<StoredMatrix>,
}

fn encode_f64(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn decode_f64(hex: &str) -> Result<f64> {
    if hex.len() != 16 {
        return Err(Error::Data(format!(
            "expected 16 hex digits per value, got {:?}",
            hex
        )));
    }
    let bits = u64::from_str_radix(hex, 16)
        .map_err(|e| Error::Data(format!("bad hex float {hex:?}: {e}")))?;
    Ok(f64::from_bits(bits))
}

fn encode_matrix(name: &str, m: &Matrix) -> StoredMatrix {
    let mut data = String::with_capacity(16 * m.len());
    for v in m.data() {
        data.push_str(&encode_f64(*v));
    }
    StoredMatrix {
        name: name.to_string(),
        rows: m.rows(),
        cols: m.cols(),
        data,
    }
}

fn decode_matrix(stored: &StoredMatrix) -> Result<Matrix> {
    let n = stored.rows * stored.cols;
    if stored.data.len() != 16 * n {
        return Err(Error::Data(format!(
            "matrix {:?} declares {}x{} but carries {} hex digits",
            stored.name,
            stored.rows,
            stored.cols,
            stored.data.len()
        )));
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        values.push(decode_f64(&stored.data[16 * i..16 * (i + 1)])?);
    }
    Matrix::from_vec(stored.rows, stored.cols, values)
}

fn encode_vec(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| encode_f64(*x)).collect()
}

fn decode_vec(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| decode_f64(s)).collect()
}

/// Stable names for every matrix of a parameter set, in traversal order.
fn matrix_names(params: &ParamSet) -> Vec<String> {
    use crate::params::{Embedding, MixBlock};
    let mut names = Vec::new();
    match &params.embed {
        Embedding::Shared(_) => {
            names.push("embed.w".to_string());
            names.push("embed.b".to_string());
        }
        Embedding::PerChannel(maps) => {
            for c in 0..maps.len() {
                names.push(format!("embed.{c}.w"));
                names.push(format!("embed.{c}.b"));
            }
        }
    }
    for (l, block) in params.blocks.iter().enumerate() {
        match block {
            MixBlock::MlpMix { .. } => {
                names.push(format!("block.{l}.channel.w"));
                names.push(format!("block.{l}.channel.b"));
                names.push(format!("block.{l}.feature.w"));
                names.push(format!("block.{l}.feature.b"));
            }
            MixBlock::Attention { .. } => {
                names.push(format!("block.{l}.query"));
                names.push(format!("block.{l}.key"));
                names.push(format!("block.{l}.value"));
                names.push(format!("block.{l}.output"));
            }
        }
    }
    names.push("proj.w".to_string());
    names.push("proj.b".to_string());
    if let Some(bank) = &params.adapters {
        for c in 0..bank.channels() {
            names.push(format!("adapter.phi.{c}"));
        }
        names.push("adapter.w".to_string());
    }
    names
}

/// Write a full checkpoint: config echo, every parameter matrix, and
/// optionally the standardizer fitted to the training split.
pub fn save_checkpoint(
    path: &Path,
    params: &ParamSet,
    config: &ModelConfig,
    standardizer: Option<&Standardizer>,
) -> Result<()> {
    config.validate()?;
    let names = matrix_names(params);
    let mats = params.visit();
    if names.len() != mats.len() {
        return Err(Error::Data(format!(
            "parameter traversal produced {} matrices for {} names",
            mats.len(),
            names.len()
        )));
    }
    let matrices = names
        .iter()
        .zip(mats.iter())
        .map(|(name, (_, m))| encode_matrix(name, m))
        .collect();
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        kind: CheckpointKind::Full,
        config: *config,
        standardizer: standardizer.map(|s| StoredStandardizer {
            mean: encode_vec(&s.mean),
            std: encode_vec(&s.std),
        }),
        matrices,
    };
    let json = serde_json::to_string(&file)?;
    fs::write(path, json).map_err(Error::from)
}

/// Write only the adapter bank plus the config echo.
pub fn save_adapter_checkpoint(path: &Path, params: &ParamSet, config: &ModelConfig) -> Result<()> {
    config.validate()?;
    let bank = params.adapters.as_ref().ok_or_else(|| {
        Error::Config("adapter-only checkpoint needs a model with adapters".into())
    })?;
    let mut matrices = Vec::with_capacity(bank.channels() + 1);
    for c in 0..bank.channels() {
        matrices.push(encode_matrix(&format!("adapter.phi.{c}"), &bank.phi[c]));
    }
    matrices.push(encode_matrix("adapter.w", &bank.w));
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        kind: CheckpointKind::AdapterOnly,
        config: *config,
        standardizer: None,
        matrices,
    };
    let json = serde_json::to_string(&file)?;
    fs::write(path, json).map_err(Error::from)
}

fn parse_file(path: &Path) -> Result<CheckpointFile> {
    let text = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.format != FORMAT {
        return Err(Error::Data(format!(
            "unsupported checkpoint format {:?} in {}",
            file.format,
            path.display()
        )));
    }
    Ok(file)
}

/// Read a full checkpoint back: (params, config, standardizer if stored).
pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, ModelConfig, Option<Standardizer>)> {
    let file = parse_file(path)?;
    if file.kind != CheckpointKind::Full {
        return Err(Error::Data(format!(
            "{} is an adapter-only checkpoint, expected a full one",
            path.display()
        )));
    }
    file.config.validate()?;
    let mut params = ParamSet::zeros(&file.config)?;
    let names = matrix_names(&params);
    if names.len() != file.matrices.len() {
        return Err(Error::Data(format!(
            "checkpoint holds {} matrices, config implies {}",
            file.matrices.len(),
            names.len()
        )));
    }
    for (slot, ((expected, stored), (_, target))) in names
        .iter()
        .zip(file.matrices.iter())
        .zip(params.visit_mut())
        .enumerate()
    {
        if stored.name != *expected {
            return Err(Error::Data(format!(
                "checkpoint matrix {slot} is named {:?}, expected {:?}",
                stored.name, expected
            )));
        }
        let decoded = decode_matrix(stored)?;
        if decoded.rows() != target.rows() || decoded.cols() != target.cols() {
            return Err(Error::shape(
                "load_checkpoint",
                format!("{} {}x{}", stored.name, decoded.rows(), decoded.cols()),
                format!("config {}x{}", target.rows(), target.cols()),
            ));
        }
        *target = decoded;
    }
    let standardizer = match file.standardizer {
        None => None,
        Some(s) => {
            let mean = decode_vec(&s.mean)?;
            let std = decode_vec(&s.std)?;
            if mean.len() != std.len() || mean.len() != file.config.channels {
                return Err(Error::Data(format!(
                    "standardizer holds {}/{} stats for {} channels",
                    mean.len(),
                    std.len(),
                    file.config.channels
                )));
            }
            Some(Standardizer { mean, std })
        }
    };
    Ok((params, file.config, standardizer))
}

/// Read an adapter-only checkpoint back: (bank, config echo).
pub fn load_adapter_checkpoint(path: &Path) -> Result<(AdapterBank, ModelConfig)> {
    let file = parse_file(path)?;
    if file.kind != CheckpointKind::AdapterOnly {
        return Err(Error::Data(format!(
            "{} is a full checkpoint, expected adapter-only",
            path.display()
        )));
    }
    file.config.validate()?;
    let cfg = file.config;
    if !cfg.adapter_enabled {
        return Err(Error::Config(
            "adapter-only checkpoint carries a config with the adapter disabled".into(),
        ));
    }
    if file.matrices.len() != cfg.channels + 1 {
        return Err(Error::Data(format!(
            "adapter checkpoint holds {} matrices, expected {} per-channel + 1 shared",
            file.matrices.len(),
            cfg.channels
        )));
    }
    let mut phi = Vec::with_capacity(cfg.channels);
    for (c, stored) in file.matrices[..cfg.channels].iter().enumerate() {
        let expected = format!("adapter.phi.{c}");
        if stored.name != expected {
            return Err(Error::Data(format!(
                "adapter checkpoint matrix {c} is named {:?}, expected {:?}",
                stored.name, expected
            )));
        }
        let m = decode_matrix(stored)?;
        if m.rows() != cfg.rank || m.cols() != cfg.embed_dim {
            return Err(Error::shape(
                "load_adapter_checkpoint",
                format!("{} {}x{}", stored.name, m.rows(), m.cols()),
                format!("config {}x{}", cfg.rank, cfg.embed_dim),
            ));
        }
        phi.push(m);
    }
    let stored_w = &file.matrices[cfg.channels];
    if stored_w.name != "adapter.w" {
        return Err(Error::Data(format!(
            "last adapter matrix is named {:?}, expected \"adapter.w\"",
            stored_w.name
        )));
    }
    let w = decode_matrix(stored_w)?;
    if w.rows() != cfg.rank || w.cols() != cfg.adapt_dim {
        return Err(Error::shape(
            "load_adapter_checkpoint",
            format!("adapter.w {}x{}", w.rows(), w.cols()),
            format!("config {}x{}", cfg.rank, cfg.adapt_dim),
        ));
    }
    Ok((AdapterBank { phi, w }, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EmbeddingMode, MixingMode};
    use crate::data::{generate_synthetic, SynthConfig};
    use tempfile::tempdir;

    fn example_config() -> ModelConfig {
        let mut cfg = ModelConfig::baseline(8, 3, 3);
        cfg.embed_dim = 6;
        cfg.adapt_dim = 2;
        cfg.rank = 2;
        cfg.layers = 1;
        cfg.mixing = MixingMode::Attention;
        cfg.adapter_enabled = true;
        cfg
    }

    #[test]
    fn hex_encoding_round_trips_awkward_values() {
        for v in [
            0.0,
            -0.0,
            1.0,
            -1.5,
            f64::MIN_POSITIVE,
            f64::MAX,
            1e-308,
            std::f64::consts::PI,
            f64::INFINITY,
        ] {
            let back = decode_f64(&encode_f64(v)).unwrap();
            assert_eq!(v.to_bits(), back.to_bits());
        }
        let nan_back = decode_f64(&encode_f64(f64::NAN)).unwrap();
        assert!(nan_back.is_nan());
    }

    #[test]
    fn full_checkpoint_round_trips_bit_exactly() {
        let cfg = example_config();
        let params = ParamSet::init(&cfg, 17).unwrap();
        let synth = SynthConfig::new(3, 128, 2);
        let ds = generate_synthetic(&synth).unwrap();
        let std = Standardizer::fit(&ds);

        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &params, &cfg, Some(&std)).unwrap();
        let (loaded, loaded_cfg, loaded_std) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);
        assert_eq!(loaded, params, "every matrix must round-trip bit-exactly");
        let loaded_std = loaded_std.unwrap();
        assert_eq!(loaded_std, std);
    }

    #[test]
    fn checkpoint_without_standardizer_loads_none() {
        let mut cfg = ModelConfig::baseline(8, 3, 2);
        cfg.embed_dim = 4;
        cfg.layers = 0;
        let params = ParamSet::init(&cfg, 1).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("bare.ckpt");
        save_checkpoint(&path, &params, &cfg, None).unwrap();
        let (_, _, std) = load_checkpoint(&path).unwrap();
        assert!(std.is_none());
    }

    #[test]
    fn per_channel_and_mlp_shapes_round_trip() {
        let mut cfg = ModelConfig::baseline(8, 3, 2);
        cfg.embed_dim = 4;
        cfg.layers = 2;
        cfg.mixing = MixingMode::MlpMix;
        cfg.embedding = EmbeddingMode::PerChannel;
        let params = ParamSet::init(&cfg, 9).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("pc.ckpt");
        save_checkpoint(&path, &params, &cfg, None).unwrap();
        let (loaded, loaded_cfg, _) = load_checkpoint(&path).unwrap();
        assert_eq!(loaded_cfg, cfg);
        assert_eq!(loaded, params);
    }

    #[test]
    fn adapter_only_round_trips() {
        let cfg = example_config();
        let params = ParamSet::init(&cfg, 23).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("adapters.ckpt");
        save_adapter_checkpoint(&path, &params, &cfg).unwrap();
        let (bank, echo) = load_adapter_checkpoint(&path).unwrap();
        assert_eq!(echo, cfg);
        assert_eq!(&bank, params.adapters.as_ref().unwrap());
    }

    #[test]
    fn kinds_are_not_interchangeable() {
        let cfg = example_config();
        let params = ParamSet::init(&cfg, 3).unwrap();
        let dir = tempdir().unwrap();
        let full = dir.path().join("full.ckpt");
        let adapter = dir.path().join("adapter.ckpt");
        save_checkpoint(&full, &params, &cfg, None).unwrap();
        save_adapter_checkpoint(&adapter, &params, &cfg).unwrap();
        assert!(load_checkpoint(&adapter).is_err());
        assert!(load_adapter_checkpoint(&full).is_err());
    }

    #[test]
    fn adapter_checkpoint_needs_adapters() {
        let mut cfg = ModelConfig::baseline(8, 3, 2);
        cfg.embed_dim = 4;
        cfg.layers = 0;
        let params = ParamSet::init(&cfg, 3).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        assert!(save_adapter_checkpoint(&path, &params, &cfg).is_err());
    }

    #[test]
    fn tampered_files_are_rejected_with_reasons() {
        let cfg = example_config();
        let params = ParamSet::init(&cfg, 8).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &params, &cfg, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        // truncated hex payload
        let bad = text.replacen("\"data\":\"", "\"data\":\"00", 1);
        let bad_path = dir.path().join("bad1.ckpt");
        fs::write(&bad_path, bad).unwrap();
        assert!(load_checkpoint(&bad_path).is_err());

        // renamed matrix
        let bad = text.replacen("embed.w", "embed.weights", 1);
        let bad_path = dir.path().join("bad2.ckpt");
        fs::write(&bad_path, bad).unwrap();
        assert!(load_checkpoint(&bad_path).is_err());

        // foreign format marker
        let bad = text.replacen(FORMAT, "other-format", 1);
        let bad_path = dir.path().join("bad3.ckpt");
        fs::write(&bad_path, bad).unwrap();
        assert!(load_checkpoint(&bad_path).is_err());

        // not JSON at all
        let bad_path = dir.path().join("bad4.ckpt");
        fs::write(&bad_path, "definitely not json").unwrap();
        assert!(load_checkpoint(&bad_path).is_err());
    }

    #[test]
    fn loading_checks_shape_against_config() {
        // shrink a stored dimension without touching the data length so the
        // declared shape and payload disagree
        let cfg = example_config();
        let params = ParamSet::init(&cfg, 4).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &params, &cfg, None).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let needle = format!("\"rows\":{}", cfg.lookback);
        let bad = text.replacen(&needle, "\"rows\":2", 1);
        assert_ne!(bad, text, "fixture must actually change the file");
        let bad_path = dir.path().join("bad.ckpt");
        fs::write(&bad_path, bad).unwrap();
        assert!(load_checkpoint(&bad_path).is_err());
    }
}

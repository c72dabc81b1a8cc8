//! Argument grammar, config-file merging, and exit-code policy for the
//! `clora` binary. Command bodies live in [`commands`].
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric divergence.

pub mod commands;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use clora_core::{EmbeddingMode, Error, MixingMode, ModelConfig, Result, TrainConfig};

#[derive(Parser, Debug)]
#[command(
    name = "clora",
    version,
    about = "Multivariate forecasting with channel-aware low-rank adapters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded synthetic dataset and write it as CSV
    Synth(SynthArgs),
    /// Fit a model and write checkpoint, epoch record, and test metrics
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset's test split
    Eval(EvalArgs),
    /// Fine-tune only the channel adapters of a pretrained model on new data
    Finetune(FinetuneArgs),
    /// Measure sensitivity to channel order with random permutations
    ShuffleTest(ShuffleTestArgs),
    /// Train one model per value of rank or lookback and tabulate metrics
    Sweep(SweepArgs),
    /// Print parameter counts for the channel strategies
    ParamCount(ParamCountArgs),
    /// Compare train/test error of adapter-on and adapter-off twins
    CapacityGap(CapacityGapArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output CSV path
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    #[arg(long, default_value_t = 1024)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Amplitude of each channel's private sinusoid
    #[arg(long, default_value_t = 1.0)]
    pub hetero_amp: f64,
    /// Amplitude of the shared latent factor
    #[arg(long, default_value_t = 0.3)]
    pub shared_amp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    /// Lower bound of per-channel frequency, cycles per sample
    #[arg(long, default_value_t = 0.02)]
    pub freq_lo: f64,
    /// Upper bound of per-channel frequency, cycles per sample
    #[arg(long, default_value_t = 0.25)]
    pub freq_hi: f64,
    /// Phase offset added to every channel, for shifted transfer targets
    #[arg(long, default_value_t = 0.0)]
    pub phase_shift: f64,
}

/// Model-shape flags shared by the training-style commands. Everything is
/// optional here; unset values fall back to the config file, then to the
/// built-in defaults.
#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    /// Input window length (default 96)
    #[arg(long)]
    pub lookback: Option<usize>,
    /// Forecast length (default 24)
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Shared embedding width D (default 64)
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Channel-specific embedding width d (default 16)
    #[arg(long)]
    pub adapt_dim: Option<usize>,
    /// Adapter rank r (default 4)
    #[arg(long)]
    pub rank: Option<usize>,
    /// Number of channel-mixing blocks (default 2, unused when mixing=none)
    #[arg(long)]
    pub layers: Option<usize>,
    /// none|mlp|attention
    #[arg(long)]
    pub mixing: Option<String>,
    /// shared|per-channel
    #[arg(long)]
    pub embedding: Option<String>,
    /// on|off
    #[arg(long)]
    pub adapter: Option<String>,
}

/// Optimization flags shared by the training-style commands.
#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size (default 32)
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate (default 1e-3)
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Early-stop patience in epochs, 0 disables (default 5)
    #[arg(long)]
    pub patience: Option<usize>,
    /// Update only adapter parameters
    #[arg(long)]
    pub freeze_backbone: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Input CSV
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoint, record, metrics, and manifest
    #[arg(long)]
    pub out: PathBuf,
    /// Flat key=value file supplying defaults for any model/train flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// The CSV has no leading time column
    #[arg(long)]
    pub no_time_column: bool,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_time_column: bool,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    /// Pretrained full checkpoint
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target dataset CSV
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_time_column: bool,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct ShuffleTestArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_time_column: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub permutations: usize,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_time_column: bool,
    /// rank|lookback
    #[arg(long)]
    pub axis: String,
    /// Comma-separated, strictly increasing values
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct ParamCountArgs {
    #[arg(long)]
    pub channels: usize,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Args, Debug)]
pub struct CapacityGapArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_time_column: bool,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

const FILE_KEYS: &[&str] = &[
    "lookback",
    "horizon",
    "embed-dim",
    "adapt-dim",
    "rank",
    "layers",
    "mixing",
    "embedding",
    "adapter",
    "epochs",
    "batch",
    "lr",
    "seed",
    "patience",
    "freeze-backbone",
];

/// Flat key=value configuration file. Keys are the long flag names without
/// the leading dashes; flags always win over file values.
#[derive(Debug, Default)]
pub struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    pub fn empty() -> Self {
        FileConfig(BTreeMap::new())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}: line {}: expected key=value, got {line:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            let key = key.trim();
            if !FILE_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "{}: line {}: unknown key {key:?}",
                    path.display(),
                    idx + 1
                )));
            }
            map.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FileConfig(map))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::empty()),
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s.parse::<T>().map(Some).map_err(|e| {
                Error::Config(format!("config file key {key:?}: bad value {s:?}: {e}"))
            }),
        }
    }
}

pub fn parse_mixing(s: &str) -> Result<MixingMode> {
    match s {
        "none" => Ok(MixingMode::None),
        "mlp" => Ok(MixingMode::MlpMix),
        "attention" => Ok(MixingMode::Attention),
        _ => Err(Error::Config(format!(
            "unknown mixing mode {s:?}, expected none|mlp|attention"
        ))),
    }
}

pub fn parse_embedding(s: &str) -> Result<EmbeddingMode> {
    match s {
        "shared" => Ok(EmbeddingMode::Shared),
        "per-channel" => Ok(EmbeddingMode::PerChannel),
        _ => Err(Error::Config(format!(
            "unknown embedding mode {s:?}, expected shared|per-channel"
        ))),
    }
}

pub fn parse_on_off(s: &str) -> Result<bool> {
    match s {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(Error::Config(format!("expected on|off, got {s:?}"))),
    }
}

/// Materialize a full model config from flags, file, and defaults, with the
/// channel count always taken from the dataset at hand.
pub fn resolve_model(
    flags: &ModelFlags,
    file: &FileConfig,
    channels: usize,
) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::baseline(
        pick(flags.lookback, file.get("lookback")?, 96),
        pick(flags.horizon, file.get("horizon")?, 24),
        channels,
    );
    cfg.embed_dim = pick(flags.embed_dim, file.get("embed-dim")?, cfg.embed_dim);
    cfg.adapt_dim = pick(flags.adapt_dim, file.get("adapt-dim")?, cfg.adapt_dim);
    cfg.rank = pick(flags.rank, file.get("rank")?, cfg.rank);
    cfg.layers = pick(flags.layers, file.get("layers")?, cfg.layers);
    if let Some(s) = flags.mixing.as_deref().or_else(|| file.raw("mixing")) {
        cfg.mixing = parse_mixing(s)?;
    }
    if let Some(s) = flags.embedding.as_deref().or_else(|| file.raw("embedding")) {
        cfg.embedding = parse_embedding(s)?;
    }
    if let Some(s) = flags.adapter.as_deref().or_else(|| file.raw("adapter")) {
        cfg.adapter_enabled = parse_on_off(s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_train(flags: &TrainFlags, file: &FileConfig) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    let file_freeze = match file.raw("freeze-backbone") {
        Some(s) => parse_on_off(s)?,
        None => false,
    };
    let cfg = TrainConfig {
        epochs: pick(flags.epochs, file.get("epochs")?, defaults.epochs),
        batch_size: pick(flags.batch, file.get("batch")?, defaults.batch_size),
        learning_rate: pick(flags.lr, file.get("lr")?, defaults.learning_rate),
        seed: pick(flags.seed, file.get("seed")?, defaults.seed),
        freeze_backbone: flags.freeze_backbone || file_freeze,
        early_stop_patience: pick(
            flags.patience,
            file.get("patience")?,
            defaults.early_stop_patience,
        ),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::NonFinite(_) => 3,
        _ => 2,
    }
}

/// Parse and dispatch. Returns the process exit code instead of exiting so
/// tests can call it in-process.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version render on stdout and succeed; real usage errors
            // render on stderr and exit 1
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Finetune(args) => commands::finetune(args),
        Command::ShuffleTest(args) => commands::shuffle_test(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::ParamCount(args) => commands::param_count(args),
        Command::CapacityGap(args) => commands::capacity_gap(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn defaults_materialize_without_flags_or_file() {
        let cfg = resolve_model(&ModelFlags::default(), &FileConfig::empty(), 7).unwrap();
        assert_eq!(cfg.lookback, 96);
        assert_eq!(cfg.horizon, 24);
        assert_eq!(cfg.channels, 7);
        assert_eq!(cfg.embed_dim, 64);
        assert_eq!(cfg.adapt_dim, 16);
        assert_eq!(cfg.rank, 4);
        assert_eq!(cfg.mixing, MixingMode::None);
        assert_eq!(cfg.embedding, EmbeddingMode::Shared);
        assert!(!cfg.adapter_enabled);

        let tc = resolve_train(&TrainFlags::default(), &FileConfig::empty()).unwrap();
        assert_eq!(tc, TrainConfig::default());
    }

    #[test]
    fn file_values_apply_and_flags_override_them() {
        let f =
            write_config("lookback=48\nmixing=mlp\nadapter=on\nlr=0.01\n# comment\n\nepochs=7\n");
        let file = FileConfig::load(f.path()).unwrap();

        let cfg = resolve_model(&ModelFlags::default(), &file, 4).unwrap();
        assert_eq!(cfg.lookback, 48);
        assert_eq!(cfg.mixing, MixingMode::MlpMix);
        assert!(cfg.adapter_enabled);

        let flags = ModelFlags {
            lookback: Some(12),
            mixing: Some("attention".into()),
            ..ModelFlags::default()
        };
        let cfg = resolve_model(&flags, &file, 4).unwrap();
        assert_eq!(cfg.lookback, 12, "flag must beat file");
        assert_eq!(cfg.mixing, MixingMode::Attention);
        assert!(cfg.adapter_enabled, "unset flag still reads the file");

        let tc = resolve_train(&TrainFlags::default(), &file).unwrap();
        assert_eq!(tc.epochs, 7);
        assert_eq!(tc.learning_rate, 0.01);
    }

    #[test]
    fn malformed_config_files_are_rejected() {
        let f = write_config("lookback\n");
        assert!(FileConfig::load(f.path()).is_err());
        let f = write_config("look_back=12\n");
        assert!(FileConfig::load(f.path()).is_err(), "unknown key");
        let f = write_config("lookback=twelve\n");
        let file = FileConfig::load(f.path()).unwrap();
        assert!(resolve_model(&ModelFlags::default(), &file, 3).is_err());
    }

    #[test]
    fn enum_values_parse_and_reject() {
        assert_eq!(parse_mixing("mlp").unwrap(), MixingMode::MlpMix);
        assert!(parse_mixing("MLP").is_err());
        assert_eq!(
            parse_embedding("per-channel").unwrap(),
            EmbeddingMode::PerChannel
        );
        assert!(parse_embedding("per_channel").is_err());
        assert!(parse_on_off("on").unwrap());
        assert!(!parse_on_off("off").unwrap());
        assert!(parse_on_off("yes").is_err());
    }

    #[test]
    fn invalid_resolved_configs_fail_upfront() {
        // rank above the embedding width with the adapter enabled
        let flags = ModelFlags {
            embed_dim: Some(4),
            rank: Some(8),
            adapter: Some("on".into()),
            ..ModelFlags::default()
        };
        assert!(resolve_model(&flags, &FileConfig::empty(), 3).is_err());

        // adapter on per-channel embedding is contradictory
        let flags = ModelFlags {
            adapter: Some("on".into()),
            embedding: Some("per-channel".into()),
            ..ModelFlags::default()
        };
        assert!(resolve_model(&flags, &FileConfig::empty(), 3).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["clora", "no-such-command"]), 1);
        assert_eq!(run(["clora", "train", "--no-such-flag"]), 1);
        assert_eq!(run(["clora"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["clora", "--help"]), 0);
        assert_eq!(run(["clora", "train", "--help"]), 0);
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Data("x".into())), 2);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), 3);
        assert_eq!(
            exit_code(&Error::Shape {
                op: "t",
                left: "a".into(),
                right: "b".into()
            }),
            2
        );
    }
}

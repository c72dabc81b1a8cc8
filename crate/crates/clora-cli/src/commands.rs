//! Implementations of the eight subcommands. Each file-producing command
//! writes its manifest first, then its artifacts, and prints a short
//! human-readable summary on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use clora_core::{
    capacity_gap_report, evaluate_model, extra_param_count, finetune_adapters_observed,
    fit_observed, generate_synthetic, load_checkpoint, load_csv, make_windows,
    save_adapter_checkpoint, save_checkpoint, shuffle_test as run_shuffle_test,
    strategy_param_counts, sweep as run_sweep, write_csv, EpochRecord, Error, MetricsReport,
    ModelConfig, ParamSet, Result, Split, Standardizer, Strategy, SweepAxis, SynthConfig,
    TimeSeriesDataset, TrainRecord, WindowSample,
};

use crate::manifest::RunManifest;
use crate::{
    resolve_model, resolve_train, CapacityGapArgs, EvalArgs, FileConfig, FinetuneArgs,
    ParamCountArgs, ShuffleTestArgs, SweepArgs, SynthArgs, TrainArgs,
};

fn load_data(path: &Path, no_time_column: bool) -> Result<TimeSeriesDataset> {
    load_csv(path, !no_time_column)
}

/// Fit per-channel statistics on the train split and map the whole dataset
/// into standardized space, the convention all metrics are reported in.
fn standardize(ds: &TimeSeriesDataset) -> Result<(Standardizer, TimeSeriesDataset)> {
    let standardizer = Standardizer::fit(ds);
    let z = standardizer.standardize(ds)?;
    Ok((standardizer, z))
}

fn windows3(
    ds: &TimeSeriesDataset,
    lookback: usize,
    horizon: usize,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>, Vec<WindowSample>)> {
    Ok((
        make_windows(ds, lookback, horizon, Split::Train)?,
        make_windows(ds, lookback, horizon, Split::Val)?,
        make_windows(ds, lookback, horizon, Split::Test)?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

fn write_record_jsonl(path: &Path, record: &TrainRecord) -> Result<()> {
    let mut out = String::new();
    for epoch in &record.epochs {
        out.push_str(&serde_json::to_string(epoch)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn print_epoch(total: usize) -> impl FnMut(&EpochRecord) {
    move |e| {
        println!(
            "epoch {}/{} train_mse {:.6} val_mse {:.6} ({:.2}s)",
            e.epoch, total, e.train_mse, e.val_mse, e.seconds
        );
    }
}

fn print_metrics(name: &str, m: &MetricsReport) {
    println!(
        "{name}: mse {:.6} mae {:.6} over {} windows",
        m.mse, m.mae, m.n_samples
    );
}

/// Checkpoint channel count must match the dataset; the message names both.
fn check_channels(op: &'static str, config: &ModelConfig, ds: &TimeSeriesDataset) -> Result<()> {
    if config.channels != ds.channels() {
        return Err(Error::Shape {
            op,
            left: format!("checkpoint trained on {} channels", config.channels),
            right: format!("dataset has {} channels", ds.channels()),
        });
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut config = SynthConfig::new(args.channels, args.length, args.seed);
    config.hetero_amp = args.hetero_amp;
    config.shared_amp = args.shared_amp;
    config.noise_sigma = args.noise_sigma;
    config.freq_range = (args.freq_lo, args.freq_hi);
    config.phase_shift = args.phase_shift;
    let ds = generate_synthetic(&config)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    write_csv(&ds, &args.out)?;
    println!(
        "wrote {} rows x {} channels to {}",
        ds.total_len(),
        ds.channels(),
        args.out.display()
    );
    Ok(())
}

struct OutDir {
    root: PathBuf,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.config.as_deref())?;
    let ds = load_data(&args.data, args.no_time_column)?;
    let model = resolve_model(&args.model, &file, ds.channels())?;
    let train_cfg = resolve_train(&args.train, &file)?;
    let out = OutDir::create(&args.out)?;

    let (standardizer, z) = standardize(&ds)?;
    let (train_w, val_w, test_w) = windows3(&z, model.lookback, model.horizon)?;

    let ckpt_path = out.path("model.ckpt");
    let record_path = out.path("record.jsonl");
    let metrics_path = out.path("metrics.json");
    RunManifest::new("train", train_cfg.seed)
        .with_data(&args.data)?
        .with_model(model)
        .with_train(train_cfg.clone())
        .artifact("checkpoint", &ckpt_path)
        .artifact("record", &record_path)
        .artifact("metrics", &metrics_path)
        .note("standardizer", "fitted on the train split")
        .note(
            "windows",
            format!("{}/{}/{}", train_w.len(), val_w.len(), test_w.len()),
        )
        .write(&out.path("manifest.json"))?;

    let (params, record) = fit_observed(
        &train_w,
        &val_w,
        &model,
        &train_cfg,
        print_epoch(train_cfg.epochs),
    )?;
    save_checkpoint(&ckpt_path, &params, &model, Some(&standardizer))?;
    write_record_jsonl(&record_path, &record)?;
    let metrics = evaluate_model(&params, &model, &test_w)?;
    write_json(&metrics_path, &metrics)?;
    print_metrics("test", &metrics);
    println!("checkpoint {}", ckpt_path.display());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (params, config, stored_std) = load_checkpoint(&args.checkpoint)?;
    let ds = load_data(&args.data, args.no_time_column)?;
    check_channels("eval", &config, &ds)?;
    let out = OutDir::create(&args.out)?;

    let (std_source, standardizer) = match stored_std {
        Some(s) => ("checkpoint", s),
        None => ("fitted on the train split", Standardizer::fit(&ds)),
    };
    let z = standardizer.standardize(&ds)?;
    let test_w = make_windows(&z, config.lookback, config.horizon, Split::Test)?;

    let metrics_path = out.path("metrics.json");
    RunManifest::new("eval", 0)
        .with_data(&args.data)?
        .with_checkpoint(&args.checkpoint)?
        .with_model(config)
        .artifact("metrics", &metrics_path)
        .note("standardizer", std_source)
        .write(&out.path("manifest.json"))?;

    let metrics = evaluate_model(&params, &config, &test_w)?;
    write_json(&metrics_path, &metrics)?;
    print_metrics("test", &metrics);
    println!("step  mse");
    for (i, v) in metrics.per_horizon_mse.iter().enumerate() {
        println!("{:<5} {:.6}", i + 1, v);
    }
    Ok(())
}

#[derive(Serialize)]
struct FinetuneMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    zero_shot: Option<MetricsReport>,
    finetuned: MetricsReport,
}

pub fn finetune(args: FinetuneArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.config.as_deref())?;
    let (pretrained, pre_cfg, _) = load_checkpoint(&args.checkpoint)?;
    let ds = load_data(&args.data, args.no_time_column)?;
    let train_cfg = resolve_train(&args.train, &file)?;
    let out = OutDir::create(&args.out)?;

    // the target dataset gets its own train-split statistics
    let (standardizer, z) = standardize(&ds)?;
    let (train_w, val_w, test_w) = windows3(&z, pre_cfg.lookback, pre_cfg.horizon)?;

    let mut target_cfg = pre_cfg;
    target_cfg.channels = ds.channels();

    let adapter_path = out.path("adapters.ckpt");
    let ckpt_path = out.path("model.ckpt");
    let record_path = out.path("record.jsonl");
    let metrics_path = out.path("metrics.json");
    RunManifest::new("finetune", train_cfg.seed)
        .with_data(&args.data)?
        .with_checkpoint(&args.checkpoint)?
        .with_model(target_cfg)
        .with_train(train_cfg.clone())
        .artifact("adapters", &adapter_path)
        .artifact("checkpoint", &ckpt_path)
        .artifact("record", &record_path)
        .artifact("metrics", &metrics_path)
        .note("standardizer", "fitted on the target train split")
        .write(&out.path("manifest.json"))?;

    // zero-shot baseline is only defined when the channel count carries over
    let zero_shot = if target_cfg.channels == pre_cfg.channels {
        let m = evaluate_model(&pretrained, &pre_cfg, &test_w)?;
        print_metrics("zero-shot", &m);
        Some(m)
    } else {
        None
    };

    let (tuned, tuned_cfg, record) = finetune_adapters_observed(
        &pretrained,
        &pre_cfg,
        &train_w,
        &val_w,
        &train_cfg,
        print_epoch(train_cfg.epochs),
    )?;
    save_adapter_checkpoint(&adapter_path, &tuned, &tuned_cfg)?;
    save_checkpoint(&ckpt_path, &tuned, &tuned_cfg, Some(&standardizer))?;
    write_record_jsonl(&record_path, &record)?;

    let finetuned = evaluate_model(&tuned, &tuned_cfg, &test_w)?;
    print_metrics("fine-tuned", &finetuned);
    write_json(
        &metrics_path,
        &FinetuneMetrics {
            zero_shot,
            finetuned,
        },
    )?;
    println!("adapters {}", adapter_path.display());
    Ok(())
}

pub fn shuffle_test(args: ShuffleTestArgs) -> Result<()> {
    let (params, config, stored_std) = load_checkpoint(&args.checkpoint)?;
    let ds = load_data(&args.data, args.no_time_column)?;
    check_channels("shuffle-test", &config, &ds)?;
    let out = OutDir::create(&args.out)?;

    let standardizer = stored_std.unwrap_or_else(|| Standardizer::fit(&ds));
    let z = standardizer.standardize(&ds)?;
    let test_w = make_windows(&z, config.lookback, config.horizon, Split::Test)?;

    let metrics_path = out.path("metrics.json");
    RunManifest::new("shuffle-test", args.seed)
        .with_data(&args.data)?
        .with_checkpoint(&args.checkpoint)?
        .with_model(config)
        .artifact("metrics", &metrics_path)
        .note("permutations", args.permutations)
        .write(&out.path("manifest.json"))?;

    let report = run_shuffle_test(&params, &config, &test_w, args.seed, args.permutations)?;
    write_json(&metrics_path, &report)?;
    println!(
        "baseline mse {:.6} over {} windows",
        report.baseline.mse, report.baseline.n_samples
    );
    println!(
        "shuffled mse: mean delta {:.6} median delta {:.6} over {} permutations",
        report.mean_delta,
        report.median_delta,
        report.permutation_mse.len()
    );
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.config.as_deref())?;
    let axis = match args.axis.as_str() {
        "rank" => SweepAxis::Rank,
        "lookback" => SweepAxis::Lookback,
        other => {
            return Err(Error::Config(format!(
                "unknown sweep axis {other:?}, expected rank|lookback"
            )))
        }
    };
    let ds = load_data(&args.data, args.no_time_column)?;
    let model = resolve_model(&args.model, &file, ds.channels())?;
    let train_cfg = resolve_train(&args.train, &file)?;
    let out = OutDir::create(&args.out)?;
    let (_, z) = standardize(&ds)?;

    let csv_path = out.path("sweep.csv");
    RunManifest::new("sweep", train_cfg.seed)
        .with_data(&args.data)?
        .with_model(model)
        .with_train(train_cfg.clone())
        .artifact("sweep", &csv_path)
        .note("axis", axis.name())
        .note(
            "values",
            args.values
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )
        .write(&out.path("manifest.json"))?;

    let result = run_sweep(axis, &args.values, &model, &train_cfg, &z)?;
    let mut csv = String::from("value,train_mse,test_mse,mae,params\n");
    println!(
        "{:<10} {:>12} {:>12} {:>12} {:>10}",
        result.swept_parameter, "train_mse", "test_mse", "mae", "params"
    );
    for entry in &result.entries {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            entry.value, entry.train.mse, entry.test.mse, entry.test.mae, entry.param_count
        ));
        println!(
            "{:<10} {:>12.6} {:>12.6} {:>12.6} {:>10}",
            entry.value, entry.train.mse, entry.test.mse, entry.test.mae, entry.param_count
        );
    }
    fs::write(&csv_path, csv)?;
    println!("sweep table {}", csv_path.display());
    Ok(())
}

fn strategy_label(s: Strategy) -> &'static str {
    match s {
        Strategy::Shared => "shared",
        Strategy::PerChannel => "per-channel",
        Strategy::SharedAdapted => "shared+adapter",
    }
}

pub fn param_count(args: ParamCountArgs) -> Result<()> {
    let model = resolve_model(&args.model, &FileConfig::empty(), args.channels)?;
    println!("adapter extras: {}", extra_param_count(&model));
    println!("{:<16} {:>12}", "strategy", "params");
    for (strategy, count) in strategy_param_counts(&model) {
        println!("{:<16} {:>12}", strategy_label(strategy), count);
    }
    Ok(())
}

pub fn capacity_gap(args: CapacityGapArgs) -> Result<()> {
    let file = FileConfig::load_optional(args.config.as_deref())?;
    let ds = load_data(&args.data, args.no_time_column)?;
    let base = resolve_model(&args.model, &file, ds.channels())?;
    let mut on_cfg = base;
    on_cfg.adapter_enabled = true;
    on_cfg.validate()?;
    let mut off_cfg = base;
    off_cfg.adapter_enabled = false;
    let train_cfg = resolve_train(&args.train, &file)?;
    let out = OutDir::create(&args.out)?;

    let (_, z) = standardize(&ds)?;
    let (train_w, val_w, test_w) = windows3(&z, base.lookback, base.horizon)?;

    let metrics_path = out.path("metrics.json");
    RunManifest::new("capacity-gap", train_cfg.seed)
        .with_data(&args.data)?
        .with_model(on_cfg)
        .with_train(train_cfg.clone())
        .artifact("metrics", &metrics_path)
        .write(&out.path("manifest.json"))?;

    let train_one = |cfg: &ModelConfig| -> Result<ParamSet> {
        let (params, _) = clora_core::fit(&train_w, &val_w, cfg, &train_cfg)?;
        Ok(params)
    };
    let on_params = train_one(&on_cfg)?;
    let off_params = train_one(&off_cfg)?;

    let report = capacity_gap_report(
        (&on_params, &on_cfg),
        (&off_params, &off_cfg),
        &train_w,
        &test_w,
    )?;
    write_json(&metrics_path, &report)?;
    println!(
        "{:<12} {:>12} {:>12} {:>12}",
        "model", "train_mse", "test_mse", "gap"
    );
    for row in &report.rows {
        println!(
            "{:<12} {:>12.6} {:>12.6} {:>12.6}",
            row.label, row.train_mse, row.test_mse, row.gap
        );
    }
    println!(
        "adapter narrows the train/test gap: {}",
        if report.adapter_narrows_gap {
            "yes"
        } else {
            "no"
        }
    );
    Ok(())
}

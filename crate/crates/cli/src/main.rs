//! Command line front end: train, eval, sweep, and inspect subcommands over
//! the core library. All output records are JSON lines so runs can be piped
//! into analysis scripts; all randomness is derived from seeds given here.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use s4nn_core::data::{self, Image, LabeledDataset};
use s4nn_core::encoding::SimGrid;
use s4nn_core::error::{Result, S4nnError};
use s4nn_core::network::{load_checkpoint, save_checkpoint};
use s4nn_core::trainer::{
    evaluate, fit, sweep_threshold, Engine, EvalOptions, Evaluation, JitterSpec,
};
use serde::Serialize;

use config::Config;

#[derive(Parser)]
#[command(name = "s4nn", version, about = "Single-spike temporal network trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network, writing a checkpoint and JSON-lines metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Evaluate a checkpoint across a range of firing thresholds.
    Sweep(SweepArgs),
    /// Export first-layer receptive fields as PGMs plus weight histograms.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration file (key = value lines); defaults to the MNIST
    /// recipe when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// IDX image file for training (pairs with --train-labels).
    #[arg(long, requires = "train_labels", conflicts_with = "train_pgm")]
    train_images: Option<PathBuf>,
    /// IDX label file for training.
    #[arg(long, requires = "train_images", conflicts_with = "train_pgm")]
    train_labels: Option<PathBuf>,
    /// Directory of per-class PGM subdirectories for training.
    #[arg(long)]
    train_pgm: Option<PathBuf>,
    /// IDX image file for the held-out test set.
    #[arg(long, requires = "test_labels", conflicts_with = "test_pgm")]
    test_images: Option<PathBuf>,
    /// IDX label file for the held-out test set.
    #[arg(long, requires = "test_images", conflicts_with = "test_pgm")]
    test_labels: Option<PathBuf>,
    /// Directory of per-class PGM subdirectories for the test set.
    #[arg(long)]
    test_pgm: Option<PathBuf>,
    /// Checkpoint output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics JSONL path; epoch records go to stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config epoch count.
    #[arg(long)]
    epochs: Option<u32>,
    /// Print the effective configuration and exit without training.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file (pairs with --labels).
    #[arg(long, requires = "labels", conflicts_with = "pgm")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images", conflicts_with = "pgm")]
    labels: Option<PathBuf>,
    /// Directory of per-class PGM subdirectories.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<LabeledDataset> {
        load_source(
            self.images.as_deref(),
            self.labels.as_deref(),
            self.pgm.as_deref(),
        )?
        .ok_or_else(|| {
            S4nnError::Config("no dataset given: use --images with --labels, or --pgm".into())
        })
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Simulation horizon in time steps.
    #[arg(long, default_value_t = 256)]
    t_max: u32,
    /// Evaluate under a replacement firing threshold.
    #[arg(long)]
    threshold: Option<f32>,
    /// Maximum uniform input jitter in time steps (0 disables jitter).
    #[arg(long, default_value_t = 0)]
    jitter: u32,
    /// Seed for the jitter draws.
    #[arg(long, default_value_t = 0)]
    jitter_seed: u64,
    /// Forward engine: event or reference.
    #[arg(long, default_value = "event", value_parser = parse_engine)]
    engine: Engine,
    /// Margin for the squared-error metric; omitted means no msse field.
    #[arg(long)]
    gamma: Option<u32>,
    /// Also print a JSON line of per-class mean correct-neuron firing times.
    #[arg(long)]
    per_class: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Simulation horizon in time steps.
    #[arg(long, default_value_t = 256)]
    t_max: u32,
    /// Inclusive threshold range as lo:hi:step.
    #[arg(long)]
    thresholds: String,
    /// Forward engine: event or reference.
    #[arg(long, default_value = "event", value_parser = parse_engine)]
    engine: Engine,
    /// Metrics JSONL path; records go to stdout when absent.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint to inspect.
    #[arg(long)]
    model: PathBuf,
    /// Output directory for the PGM fields and histogram CSVs.
    #[arg(long)]
    out_dir: PathBuf,
    /// Receptive field width; defaults to 28 when the input layer has 784
    /// pixels.
    #[arg(long, requires = "height")]
    width: Option<usize>,
    /// Receptive field height.
    #[arg(long, requires = "width")]
    height: Option<usize>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 64)]
    bins: usize,
}

fn parse_engine(s: &str) -> std::result::Result<Engine, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Inspect(args) => cmd_inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| S4nnError::io_at(e, path))
}

fn load_source(
    images: Option<&Path>,
    labels: Option<&Path>,
    pgm: Option<&Path>,
) -> Result<Option<LabeledDataset>> {
    match (images, labels, pgm) {
        (Some(images), Some(labels), None) => data::load_idx(images, labels).map(Some),
        (None, None, Some(root)) => data::load_pgm_dir(root).map(Some),
        (None, None, None) => Ok(None),
        // clap's pairing rules already reject the rest; keep a hard error for
        // direct callers.
        _ => Err(S4nnError::Config(
            "give an IDX image/label pair or a PGM directory, not a mix".into(),
        )),
    }
}

/// Splits off the last `holdout` samples as a validation set, preserving
/// order. The tail is a deterministic holdout: reruns and resumed runs see
/// the identical split without any shared randomness.
fn split_tail(
    ds: LabeledDataset,
    holdout: usize,
) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    if holdout == 0 {
        return Ok((ds, None));
    }
    if holdout >= ds.len() {
        return Err(S4nnError::Config(format!(
            "val_holdout {holdout} leaves no training data (dataset has {} samples)",
            ds.len()
        )));
    }
    let cut = ds.len() - holdout;
    let LabeledDataset {
        mut images,
        mut labels,
        class_count,
    } = ds;
    let val_images = images.split_off(cut);
    let val_labels = labels.split_off(cut);
    Ok((
        LabeledDataset {
            images,
            labels,
            class_count,
        },
        Some(LabeledDataset {
            images: val_images,
            labels: val_labels,
            class_count,
        }),
    ))
}

struct MetricsSink {
    out: Box<dyn Write>,
    path: Option<PathBuf>,
    err: Option<io::Error>,
}

impl MetricsSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let out: Box<dyn Write> = match path {
            Some(p) => Box::new(fs::File::create(p).map_err(|e| S4nnError::io_at(e, p))?),
            None => Box::new(io::stdout()),
        };
        Ok(MetricsSink {
            out,
            path: path.map(Path::to_path_buf),
            err: None,
        })
    }

    /// Writes one line and flushes so progress is visible mid-run. Failures
    /// are held until `finish` because the caller may be deep in a training
    /// callback that cannot return an error.
    fn line(&mut self, line: &str) {
        if self.err.is_some() {
            return;
        }
        if let Err(e) = writeln!(self.out, "{line}").and_then(|_| self.out.flush()) {
            self.err = Some(e);
        }
    }

    fn finish(mut self) -> Result<()> {
        match self.err.take() {
            None => Ok(()),
            Some(e) => Err(match self.path.take() {
                Some(p) => S4nnError::io_at(e, p),
                None => e.into(),
            }),
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => Config::parse(&read_text(path)?)?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if args.print_config {
        print!("{}", cfg.to_text());
        return Ok(());
    }

    let out = args
        .out
        .as_deref()
        .ok_or_else(|| S4nnError::Config("--out is required to train".into()))?;
    let train_cfg = cfg.train_config()?;
    let full = load_source(
        args.train_images.as_deref(),
        args.train_labels.as_deref(),
        args.train_pgm.as_deref(),
    )?
    .ok_or_else(|| {
        S4nnError::Config(
            "no training data: use --train-images with --train-labels, or --train-pgm".into(),
        )
    })?;
    let (train, val) = split_tail(full, cfg.val_holdout)?;
    let test = load_source(
        args.test_images.as_deref(),
        args.test_labels.as_deref(),
        args.test_pgm.as_deref(),
    )?;

    let mut sink = MetricsSink::open(args.metrics.as_deref())?;
    let result = fit(
        &cfg.arch,
        &train_cfg,
        &train,
        val.as_ref(),
        test.as_ref(),
        |stats| {
            let line = serde_json::to_string(stats).expect("epoch stats always serialize");
            sink.line(&line);
        },
    )?;
    sink.finish()?;
    save_checkpoint(&result.params, out)?;

    let last = result.history.last().expect("epochs is validated nonzero");
    if let Some(acc) = last.test_acc {
        println!("final test accuracy: {acc:.4}");
    } else if let Some(acc) = last.val_acc {
        println!("final validation accuracy: {acc:.4}");
    } else if let Some(acc) = last.train_acc {
        println!("final train accuracy: {acc:.4}");
    }
    Ok(())
}

/// The eval/sweep record shape. `msse` appears only when a margin was given.
#[derive(Serialize)]
struct EvalRecord {
    samples: usize,
    accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    msse: Option<f64>,
    mean_decision_time: f64,
    mean_spikes: f64,
}

impl From<&Evaluation> for EvalRecord {
    fn from(eval: &Evaluation) -> Self {
        EvalRecord {
            samples: eval.samples,
            accuracy: eval.accuracy,
            msse: eval.msse,
            mean_decision_time: eval.mean_decision_time,
            mean_spikes: eval.mean_spikes,
        }
    }
}

#[derive(Serialize)]
struct PerClassRecord<'a> {
    per_class_mean_correct_time: &'a [Option<f64>],
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let params = load_checkpoint(&args.model)?;
    let ds = args.data.load()?;
    let grid = SimGrid::new(args.t_max, 255)?;
    let opts = EvalOptions {
        threshold_override: args.threshold,
        jitter: (args.jitter > 0).then_some(JitterSpec {
            j_max: args.jitter,
            seed: args.jitter_seed,
        }),
        engine: args.engine,
        gamma: args.gamma,
    };
    let eval = evaluate(&params, &ds, grid, &opts)?;
    let record = serde_json::to_string(&EvalRecord::from(&eval)).expect("record serializes");
    println!("{record}");
    if args.per_class {
        let extra = serde_json::to_string(&PerClassRecord {
            per_class_mean_correct_time: &eval.per_class_mean_correct_time,
        })
        .expect("record serializes");
        println!("{extra}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRecord {
    theta: f32,
    #[serde(flatten)]
    eval: EvalRecord,
}

/// Expands `lo:hi:step` into the inclusive list lo, lo+step, ..., hi.
fn parse_threshold_range(spec: &str) -> Result<Vec<f32>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts[..] else {
        return Err(S4nnError::Config(format!(
            "--thresholds expects lo:hi:step, got '{spec}'"
        )));
    };
    // Parse in f64 so fractional steps count cleanly; emit f32 at the end.
    let parse = |what: &str, v: &str| -> Result<f64> {
        v.trim()
            .parse::<f64>()
            .map_err(|_| S4nnError::Config(format!("--thresholds {what}: cannot parse '{v}'")))
    };
    let (lo, hi, step) = (parse("lo", lo)?, parse("hi", hi)?, parse("step", step)?);
    if !lo.is_finite() || !hi.is_finite() || !step.is_finite() || step <= 0.0 {
        return Err(S4nnError::Config(format!(
            "--thresholds needs a finite range and a positive step, got {lo}:{hi}:{step}"
        )));
    }
    if hi < lo {
        return Err(S4nnError::Config(format!(
            "--thresholds range is empty: {lo} > {hi}"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| (lo + k as f64 * step).min(hi) as f32)
        .collect())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let params = load_checkpoint(&args.model)?;
    let ds = args.data.load()?;
    let grid = SimGrid::new(args.t_max, 255)?;
    let thresholds = parse_threshold_range(&args.thresholds)?;
    let opts = EvalOptions {
        engine: args.engine,
        ..EvalOptions::default()
    };
    let rows = sweep_threshold(&params, &ds, grid, &thresholds, &opts)?;
    let mut sink = MetricsSink::open(args.metrics.as_deref())?;
    for (theta, eval) in &rows {
        let record = SweepRecord {
            theta: *theta,
            eval: EvalRecord::from(eval),
        };
        sink.line(&serde_json::to_string(&record).expect("record serializes"));
    }
    sink.finish()
}

/// Min-max normalizes one weight row into 8-bit pixels. A constant row has
/// no contrast to show and becomes uniform mid-gray.
fn receptive_field(row: &[f32], width: usize, height: usize) -> Image {
    let (min, max) = min_max(row);
    let span = max - min;
    let pixels = if span > 0.0 {
        row.iter()
            .map(|&w| (f64::from(w - min) / f64::from(span) * 255.0).round() as u8)
            .collect()
    } else {
        vec![128u8; row.len()]
    };
    Image {
        width,
        height,
        pixels,
    }
}

fn min_max(row: &[f32]) -> (f32, f32) {
    row.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &w| {
        (lo.min(w), hi.max(w))
    })
}

/// Histograms a weight row into `bins` equal-width bins spanning its value
/// range, as (lo, hi, count) rows. A constant row gets a unit-width span
/// centered on the value so every bin is still well formed.
fn histogram(row: &[f32], bins: usize) -> Vec<(f32, f32, u64)> {
    let (min, max) = min_max(row);
    let (base, span) = if max > min {
        (min, max - min)
    } else {
        (min - 0.5, 1.0)
    };
    let mut counts = vec![0u64; bins];
    for &w in row {
        let idx = (f64::from(w - base) / f64::from(span) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let bin_width = span / bins as f32;
    (0..bins)
        .map(|k| {
            let lo = base + k as f32 * bin_width;
            let hi = if k + 1 == bins {
                base + span
            } else {
                base + (k + 1) as f32 * bin_width
            };
            (lo, hi, counts[k])
        })
        .collect()
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let params = load_checkpoint(&args.model)?;
    let first = &params.layers[0];
    let n_pre = first.n_pre();
    let (width, height) = match (args.width, args.height) {
        (Some(w), Some(h)) => (w, h),
        _ if n_pre == 784 => (28, 28),
        _ => {
            return Err(S4nnError::Config(format!(
                "first layer has {n_pre} inputs; give --width and --height"
            )))
        }
    };
    if width == 0 || height == 0 || width * height != n_pre {
        return Err(S4nnError::Config(format!(
            "--width {width} x --height {height} does not cover the {n_pre} first-layer inputs"
        )));
    }
    if args.bins == 0 {
        return Err(S4nnError::Config("--bins must be at least 1".into()));
    }
    fs::create_dir_all(&args.out_dir).map_err(|e| S4nnError::io_at(e, &args.out_dir))?;

    for j in 0..first.n_post() {
        let row = first.weights.row(j);
        let field = receptive_field(row, width, height);
        data::write_pgm(&args.out_dir.join(format!("neuron_{j:03}.pgm")), &field)?;

        let mut csv = String::new();
        for (lo, hi, count) in histogram(row, args.bins) {
            writeln!(csv, "{lo},{hi},{count}").expect("string write");
        }
        let csv_path = args.out_dir.join(format!("neuron_{j:03}_hist.csv"));
        fs::write(&csv_path, csv).map_err(|e| S4nnError::io_at(e, &csv_path))?;
    }
    println!(
        "wrote {} receptive fields to {}",
        first.n_post(),
        args.out_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(n: usize) -> LabeledDataset {
        let images = (0..n)
            .map(|i| Image {
                width: 2,
                height: 1,
                pixels: vec![i as u8, 255 - i as u8],
            })
            .collect();
        let labels = (0..n).map(|i| i % 2).collect();
        LabeledDataset {
            images,
            labels,
            class_count: 2,
        }
    }

    #[test]
    fn split_tail_takes_the_last_samples_in_order() {
        let (train, val) = split_tail(dataset(10), 3).unwrap();
        let val = val.unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(val.len(), 3);
        assert_eq!(train.images[0].pixels[0], 0);
        assert_eq!(val.images[0].pixels[0], 7);
        assert_eq!(val.labels, vec![1, 0, 1]);
        assert_eq!(val.class_count, 2);
    }

    #[test]
    fn split_tail_zero_keeps_everything() {
        let (train, val) = split_tail(dataset(4), 0).unwrap();
        assert_eq!(train.len(), 4);
        assert!(val.is_none());
    }

    #[test]
    fn split_tail_rejects_oversized_holdout() {
        assert!(split_tail(dataset(4), 4).is_err());
        assert!(split_tail(dataset(4), 9).is_err());
    }

    #[test]
    fn threshold_range_is_inclusive() {
        let ts = parse_threshold_range("10:150:10").unwrap();
        assert_eq!(ts.len(), 15);
        assert_eq!(ts[0], 10.0);
        assert_eq!(ts[14], 150.0);
    }

    #[test]
    fn threshold_range_single_point() {
        assert_eq!(parse_threshold_range("100:100:1").unwrap(), vec![100.0]);
    }

    #[test]
    fn threshold_range_survives_fractional_steps() {
        let ts = parse_threshold_range("1:2:0.1").unwrap();
        assert_eq!(ts.len(), 11);
        assert!((ts[10] - 2.0).abs() < 1e-6);
        assert!(ts.iter().all(|&t| t <= 2.0));
    }

    #[test]
    fn threshold_range_rejects_bad_specs() {
        assert!(parse_threshold_range("10:150:0").is_err());
        assert!(parse_threshold_range("10:150:-5").is_err());
        assert!(parse_threshold_range("150:10:10").is_err());
        assert!(parse_threshold_range("10:150").is_err());
        assert!(parse_threshold_range("a:b:c").is_err());
        assert!(parse_threshold_range("").is_err());
    }

    #[test]
    fn receptive_field_normalizes_to_full_range() {
        let field = receptive_field(&[1.0, 3.0, 2.0, 1.0], 2, 2);
        assert_eq!(field.pixels, vec![0, 255, 128, 0]);
    }

    #[test]
    fn receptive_field_of_a_constant_row_is_mid_gray() {
        let field = receptive_field(&[7.0; 4], 2, 2);
        assert_eq!(field.pixels, vec![128; 4]);
    }

    #[test]
    fn histogram_covers_every_weight_once() {
        let row = [0.0f32, 0.5, 1.0, 1.0, 0.25];
        let bins = histogram(&row, 4);
        assert_eq!(bins.len(), 4);
        assert_eq!(bins.iter().map(|(_, _, c)| c).sum::<u64>(), 5);
        assert_eq!(bins[0].0, 0.0);
        assert_eq!(bins[3].1, 1.0);
        // Max values land in the last bin, not one past it.
        assert_eq!(bins[3].2, 2);
    }

    #[test]
    fn histogram_of_a_constant_row_is_well_formed() {
        let bins = histogram(&[2.0f32; 3], 4);
        assert_eq!(bins.len(), 4);
        assert_eq!(bins.iter().map(|(_, _, c)| c).sum::<u64>(), 3);
        assert!(bins.iter().all(|&(lo, hi, _)| hi > lo));
    }

    #[test]
    fn command_line_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

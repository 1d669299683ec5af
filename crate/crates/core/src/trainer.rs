//! Training orchestration and the measurement protocols: epochs with
//! dead-neuron revival, parallel evaluation, and threshold sweeps.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprop::{apply_update, backward_into, BackwardConfig, GradientSet};
use crate::data::LabeledDataset;
use crate::encoding::{apply_jitter, encode_image, SimGrid};
use crate::error::{Result, S4nnError};
use crate::forward::{classify, forward_network, NetworkTrace};
use crate::network::{init_network, reinit_neuron, InitSpec, NetworkParams};
use crate::objective::{compute_error, relative_targets, sum_squared_error};
use crate::reference::dense_forward_network;
use crate::seeds;

/// Hyperparameters for a training run. `seed` drives the per-epoch shuffles
/// and revival draws; weight initialization has its own seed in `init`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub eta: f64,
    pub gamma: u32,
    pub lambda: f64,
    pub theta: f32,
    pub grid: SimGrid,
    pub init: InitSpec,
    pub seed: u64,
    pub revive_dead: bool,
    pub normalize_hidden: bool,
    pub normalize_output: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(S4nnError::Config("epochs must be at least 1".into()));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(S4nnError::Config(format!(
                "learning rate must be finite and positive, got {}",
                self.eta
            )));
        }
        if self.gamma == 0 || self.gamma >= self.grid.t_max {
            return Err(S4nnError::Config(format!(
                "margin gamma must lie in [1, t_max), got {} with t_max={}",
                self.gamma, self.grid.t_max
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(S4nnError::Config(format!(
                "regularization must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(S4nnError::Config(format!(
                "threshold must be finite and positive, got {}",
                self.theta
            )));
        }
        Ok(())
    }

    pub fn backward_config(&self) -> BackwardConfig {
        BackwardConfig {
            grid: self.grid,
            normalize_hidden: self.normalize_hidden,
            normalize_output: self.normalize_output,
        }
    }

    /// The stock MNIST recipe for a 784-400-10 network: 256-step grid,
    /// theta 100, eta 0.2, gamma 3, lambda 1e-6, 100 epochs, seed 1.
    pub fn mnist() -> TrainConfig {
        TrainConfig {
            epochs: 100,
            eta: 0.2,
            gamma: 3,
            lambda: 1e-6,
            theta: 100.0,
            grid: SimGrid::default(),
            init: InitSpec {
                ranges: vec![(0.0, 5.0), (0.0, 50.0)],
                seed: 1,
            },
            seed: 1,
            revive_dead: true,
            normalize_hidden: true,
            normalize_output: true,
        }
    }
}

/// One JSON-lines record of training progress. Fields that a given phase
/// does not produce stay `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: Option<u32>,
    pub train_msse: Option<f64>,
    pub val_msse: Option<f64>,
    pub train_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub mean_decision_time: Option<f64>,
    pub mean_spikes: Option<f64>,
    pub revived: Option<u32>,
}

/// Per-neuron real-spike counts for the current epoch, for every non-input
/// population.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FireCounter {
    counts: Vec<Vec<u64>>,
}

impl FireCounter {
    pub fn new(params: &NetworkParams) -> Self {
        FireCounter {
            counts: params.layers.iter().map(|l| vec![0; l.n_post()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for layer in &mut self.counts {
            layer.fill(0);
        }
    }

    pub fn record(&mut self, trace: &NetworkTrace) {
        for (layer_counts, layer_trace) in self.counts.iter_mut().zip(&trace.layers) {
            for (count, &fake) in layer_counts.iter_mut().zip(&layer_trace.spikes.fake) {
                if !fake {
                    *count += 1;
                }
            }
        }
    }

    pub fn count(&self, layer: usize, neuron: usize) -> u64 {
        self.counts[layer][neuron]
    }

    /// Neurons that emitted no real spike this epoch, as (layer, neuron)
    /// pairs in ascending order.
    pub fn dead(&self) -> Vec<(usize, usize)> {
        let mut dead = Vec::new();
        for (layer, counts) in self.counts.iter().enumerate() {
            for (neuron, &c) in counts.iter().enumerate() {
                if c == 0 {
                    dead.push((layer, neuron));
                }
            }
        }
        dead
    }
}

fn validate_dataset(params: &NetworkParams, ds: &LabeledDataset) -> Result<()> {
    if ds.is_empty() {
        return Err(S4nnError::Config("dataset is empty".into()));
    }
    let n_in = params.layers[0].n_pre();
    if ds.pixel_count() != n_in {
        return Err(S4nnError::Shape(format!(
            "network expects {n_in} input neurons, images have {} pixels",
            ds.pixel_count()
        )));
    }
    let n_out = params.n_classes();
    if let Some(&label) = ds.labels.iter().find(|&&l| l >= n_out) {
        return Err(S4nnError::Shape(format!(
            "label {label} out of range for {n_out} output neurons"
        )));
    }
    Ok(())
}

/// Runs one epoch of stochastic updates over the dataset in a seeded shuffled
/// order, then revives neurons that stayed silent all epoch by redrawing
/// their incoming weights. Returns the epoch's training stats; evaluation
/// fields stay unset.
pub fn train_epoch(
    params: &mut NetworkParams,
    ds: &LabeledDataset,
    cfg: &TrainConfig,
    counters: &mut FireCounter,
    epoch: u32,
) -> Result<EpochStats> {
    cfg.validate()?;
    validate_dataset(params, ds)?;
    counters.reset();

    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut shuffle_rng = seeds::rng_for_item(cfg.seed, seeds::STREAM_SHUFFLE, u64::from(epoch));
    order.shuffle(&mut shuffle_rng);

    let bp_cfg = cfg.backward_config();
    let mut grads = GradientSet::zeros_like(params);
    let mut sse_sum = 0.0f64;
    let mut correct = 0usize;
    for &idx in &order {
        let input = encode_image(&ds.images[idx].pixels, cfg.grid);
        let trace = forward_network(&input, params, cfg.grid)?;
        counters.record(&trace);
        if classify(&trace) == ds.labels[idx] {
            correct += 1;
        }
        let targets =
            relative_targets(&trace.output().spikes, ds.labels[idx], cfg.gamma, cfg.grid.t_max)?;
        let errors = compute_error(&targets, &trace.output().spikes.times, cfg.grid.t_max)?;
        sse_sum += sum_squared_error(&errors);
        backward_into(&trace, params, &targets, bp_cfg, &mut grads)?;
        apply_update(params, &grads, cfg.eta, cfg.lambda).map_err(|e| match e {
            S4nnError::Divergence(msg) => {
                S4nnError::Divergence(format!("epoch {epoch}, sample {idx}: {msg}"))
            }
            other => other,
        })?;
    }

    let mut revived = 0u32;
    if cfg.revive_dead {
        let mut revive_rng = seeds::rng_for_item(cfg.seed, seeds::STREAM_REVIVE, u64::from(epoch));
        for (layer, neuron) in counters.dead() {
            reinit_neuron(params, layer, neuron, &cfg.init, &mut revive_rng)?;
            revived += 1;
        }
    }

    let n = ds.len() as f64;
    Ok(EpochStats {
        epoch: Some(epoch),
        train_msse: Some(sse_sum / n),
        train_acc: Some(correct as f64 / n),
        revived: Some(revived),
        ..EpochStats::default()
    })
}

/// Which forward implementation an evaluation runs on: the event-driven
/// engine or the dense clock-driven reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Event,
    Reference,
}

impl std::str::FromStr for Engine {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "event" => Ok(Engine::Event),
            "reference" => Ok(Engine::Reference),
            other => Err(format!("unknown engine '{other}', expected event or reference")),
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Engine::Event => "event",
            Engine::Reference => "reference",
        })
    }
}

/// Uniform input jitter for robustness runs: each pixel's spike time shifts
/// by up to `j_max` steps, with draws derived from `seed` and the sample
/// index (stable under parallel evaluation order).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JitterSpec {
    pub j_max: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Replace every layer's threshold for this evaluation only.
    pub threshold_override: Option<f32>,
    pub jitter: Option<JitterSpec>,
    pub engine: Engine,
    /// When set, also compute MSSE against relative targets with this margin.
    pub gamma: Option<u32>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold_override: None,
            jitter: None,
            engine: Engine::Event,
            gamma: None,
        }
    }
}

/// Metrics from one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub samples: usize,
    pub accuracy: f64,
    pub msse: Option<f64>,
    pub mean_decision_time: f64,
    pub mean_spikes: f64,
    /// Mean firing time of the label's own output neuron, per class; `None`
    /// for classes absent from the dataset.
    pub per_class_mean_correct_time: Vec<Option<f64>>,
}

struct SampleOutcome {
    correct: bool,
    decision_time: u32,
    spikes: usize,
    label: usize,
    correct_neuron_time: u32,
    sse: Option<f64>,
}

/// Evaluates the network over a dataset, in parallel across samples. The
/// parameters are never mutated; a threshold override works on a copy.
/// Results are bitwise-reproducible regardless of thread count: per-sample
/// jitter draws are derived from the sample index, and aggregation is either
/// integer arithmetic or a sequential reduction in sample order.
pub fn evaluate(
    params: &NetworkParams,
    ds: &LabeledDataset,
    grid: SimGrid,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    validate_dataset(params, ds)?;
    let effective: NetworkParams = match opts.threshold_override {
        Some(theta) => {
            if !theta.is_finite() || theta <= 0.0 {
                return Err(S4nnError::Config(format!(
                    "threshold override must be finite and positive, got {theta}"
                )));
            }
            let mut copy = params.clone();
            for layer in &mut copy.layers {
                layer.threshold = theta;
            }
            copy
        }
        None => params.clone(),
    };
    if let Some(gamma) = opts.gamma {
        if gamma == 0 || gamma >= grid.t_max {
            return Err(S4nnError::Config(format!(
                "margin gamma must lie in [1, t_max), got {gamma} with t_max={}",
                grid.t_max
            )));
        }
    }

    let outcomes: Vec<Result<SampleOutcome>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let mut input = encode_image(&ds.images[i].pixels, grid);
            if let Some(jitter) = opts.jitter {
                let mut rng =
                    seeds::rng_for_item(jitter.seed, seeds::STREAM_JITTER, i as u64);
                apply_jitter(&mut input, jitter.j_max, grid, &mut rng);
            }
            let trace = match opts.engine {
                Engine::Event => forward_network(&input, &effective, grid)?,
                Engine::Reference => dense_forward_network(&input, &effective, grid)?,
            };
            let label = ds.labels[i];
            let sse = match opts.gamma {
                Some(gamma) => {
                    let targets =
                        relative_targets(&trace.output().spikes, label, gamma, grid.t_max)?;
                    let errors =
                        compute_error(&targets, &trace.output().spikes.times, grid.t_max)?;
                    Some(sum_squared_error(&errors))
                }
                None => None,
            };
            Ok(SampleOutcome {
                correct: classify(&trace) == label,
                decision_time: trace.decision_time,
                spikes: trace.spikes_at_decision,
                label,
                correct_neuron_time: trace.output().spikes.times[label],
                sse,
            })
        })
        .collect();

    let n = ds.len();
    let mut correct = 0usize;
    let mut decision_sum = 0u64;
    let mut spike_sum = 0u64;
    let mut sse_sum = 0.0f64;
    let mut class_time_sum = vec![0u64; ds.class_count];
    let mut class_n = vec![0u64; ds.class_count];
    for outcome in outcomes {
        let o = outcome?;
        correct += usize::from(o.correct);
        decision_sum += u64::from(o.decision_time);
        spike_sum += o.spikes as u64;
        if let Some(sse) = o.sse {
            sse_sum += sse;
        }
        class_time_sum[o.label] += u64::from(o.correct_neuron_time);
        class_n[o.label] += 1;
    }

    Ok(Evaluation {
        samples: n,
        accuracy: correct as f64 / n as f64,
        msse: opts.gamma.map(|_| sse_sum / n as f64),
        mean_decision_time: decision_sum as f64 / n as f64,
        mean_spikes: spike_sum as f64 / n as f64,
        per_class_mean_correct_time: class_time_sum
            .iter()
            .zip(&class_n)
            .map(|(&sum, &count)| (count > 0).then(|| sum as f64 / count as f64))
            .collect(),
    })
}

/// Evaluates the same parameters under each threshold in turn.
pub fn sweep_threshold(
    params: &NetworkParams,
    ds: &LabeledDataset,
    grid: SimGrid,
    thresholds: &[f32],
    opts: &EvalOptions,
) -> Result<Vec<(f32, Evaluation)>> {
    thresholds
        .iter()
        .map(|&theta| {
            let with_theta = EvalOptions {
                threshold_override: Some(theta),
                ..opts.clone()
            };
            evaluate(params, ds, grid, &with_theta).map(|eval| (theta, eval))
        })
        .collect()
}

/// A finished training run: the weights and the per-epoch stats history.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: NetworkParams,
    pub history: Vec<EpochStats>,
}

/// Initializes a network and trains it for the configured number of epochs,
/// evaluating on the optional validation and test sets after each epoch.
/// `on_epoch` sees every completed epoch's stats (for streaming metrics).
pub fn fit(
    arch: &[usize],
    cfg: &TrainConfig,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    test: Option<&LabeledDataset>,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<FitResult> {
    cfg.validate()?;
    if cfg.grid.i_max != 255 {
        return Err(S4nnError::Config(format!(
            "loaders produce 8-bit intensities; i_max must be 255, got {}",
            cfg.grid.i_max
        )));
    }
    let mut params = init_network(arch, &cfg.init, cfg.theta)?;
    validate_dataset(&params, train)?;
    for ds in [val, test].into_iter().flatten() {
        validate_dataset(&params, ds)?;
    }

    let eval_opts = EvalOptions {
        gamma: Some(cfg.gamma),
        ..EvalOptions::default()
    };
    let mut counters = FireCounter::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs as usize);
    for epoch in 0..cfg.epochs {
        let mut stats = train_epoch(&mut params, train, cfg, &mut counters, epoch)?;
        if let Some(val_ds) = val {
            let eval = evaluate(&params, val_ds, cfg.grid, &eval_opts)?;
            stats.val_msse = eval.msse;
            stats.val_acc = Some(eval.accuracy);
            stats.mean_decision_time = Some(eval.mean_decision_time);
            stats.mean_spikes = Some(eval.mean_spikes);
        }
        if let Some(test_ds) = test {
            let eval = evaluate(&params, test_ds, cfg.grid, &eval_opts)?;
            stats.test_acc = Some(eval.accuracy);
            stats.mean_decision_time = Some(eval.mean_decision_time);
            stats.mean_spikes = Some(eval.mean_spikes);
        }
        on_epoch(&stats);
        history.push(stats);
    }

    Ok(FitResult { params, history })
}

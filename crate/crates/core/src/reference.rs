//! Brute-force reference implementations.
//!
//! These transcribe the model definitions literally: a clock that sweeps every
//! timestep for the forward pass, and unshortened nested loops for the
//! backward pass. They exist to pin down the semantics; the optimized engines
//! must match them exactly (firing times) or to 1e-12 (gradients). The CLI
//! exposes the dense engine via `--engine reference` so discrepancies can be
//! bisected on real data.

use crate::encoding::{SimGrid, SpikeVector};
use crate::error::Result;
use crate::forward::{check_pre, finish_trace, LayerTrace, NetworkTrace};
use crate::network::{LayerParams, Matrix, NetworkParams};
use crate::objective::TargetVector;
use crate::backprop::{BackwardConfig, GradientSet};

/// Clock-driven layer simulation: walk `t = 0..=t_max`, add every arriving
/// real spike's weight to the membrane, and fire at the first step strictly
/// before `t_max` where the potential reaches threshold; the last step only
/// accumulates drive. Presynaptic indices are scanned in ascending order
/// within a step, the same accumulation order the event engine uses.
pub fn dense_forward_layer(
    pre: &SpikeVector,
    layer: &LayerParams,
    grid: SimGrid,
) -> Result<LayerTrace> {
    check_pre(pre, layer, grid)?;

    let t_max = grid.t_max as usize;
    let mut arrivals_at: Vec<Vec<usize>> = vec![Vec::new(); t_max + 1];
    for (i, (&t, &fake)) in pre.times.iter().zip(&pre.fake).enumerate() {
        if !fake {
            arrivals_at[t as usize].push(i);
        }
    }

    let theta = f64::from(layer.threshold);
    let n_post = layer.n_post();
    let mut times = vec![grid.t_max; n_post];
    let mut fake = vec![true; n_post];
    let mut potentials = vec![0.0f64; n_post];

    for j in 0..n_post {
        let w = layer.weights.row(j);
        let mut v = 0.0f64;
        for (t, arrivals) in arrivals_at.iter().enumerate() {
            for &i in arrivals {
                v += f64::from(w[i]);
            }
            if v >= theta && t < t_max {
                times[j] = t as u32;
                fake[j] = false;
                break;
            }
        }
        potentials[j] = v;
    }

    Ok(LayerTrace {
        spikes: SpikeVector { times, fake },
        potentials,
    })
}

/// Clock-driven network pass with the same trace shape and decision metrics
/// as the event engine.
pub fn dense_forward_network(
    input: &SpikeVector,
    params: &NetworkParams,
    grid: SimGrid,
) -> Result<NetworkTrace> {
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut current = input.clone();
    for layer in &params.layers {
        let trace = dense_forward_layer(&current, layer, grid)?;
        current = trace.spikes.clone();
        layers.push(trace);
    }
    Ok(finish_trace(input.clone(), layers, grid))
}

/// Backward pass written as plain nested loops straight from the update
/// rules, with no shared helpers. Structured for auditability, not speed.
pub fn naive_backward(
    trace: &NetworkTrace,
    params: &NetworkParams,
    targets: &TargetVector,
    cfg: BackwardConfig,
) -> Result<GradientSet> {
    let t_max = f64::from(cfg.grid.t_max);
    let t_max_steps = cfg.grid.t_max;

    let out_times = &trace.output().spikes.times;
    let mut delta: Vec<f64> = Vec::with_capacity(out_times.len());
    for j in 0..out_times.len() {
        let e_j = (f64::from(targets[j]) - f64::from(out_times[j])) / t_max;
        delta.push(-e_j);
    }
    if cfg.normalize_output {
        delta = naive_normalize(delta);
    }

    let n_layers = params.layers.len();
    let mut grads: Vec<Matrix<f64>> = Vec::new();
    for k in (0..n_layers).rev() {
        let pre_spikes = if k == 0 {
            &trace.input
        } else {
            &trace.layers[k - 1].spikes
        };
        let post_spikes = &trace.layers[k].spikes;

        let mut grad = Matrix::filled(post_spikes.len(), pre_spikes.len(), 0.0f64);
        for j in 0..post_spikes.len() {
            for i in 0..pre_spikes.len() {
                let fired_early = post_spikes.times[j] < t_max_steps;
                let causal = pre_spikes.times[i] <= post_spikes.times[j];
                if fired_early && causal {
                    grad[(j, i)] = -delta[j];
                }
            }
        }
        grads.push(grad);

        if k > 0 {
            let w = &params.layers[k].weights;
            let mut lower = vec![0.0f64; pre_spikes.len()];
            for (j, slot) in lower.iter_mut().enumerate() {
                for (k2, d) in delta.iter().enumerate() {
                    if pre_spikes.times[j] <= post_spikes.times[k2] {
                        *slot += d * f64::from(w[(k2, j)]);
                    }
                }
            }
            delta = if cfg.normalize_hidden {
                naive_normalize(lower)
            } else {
                lower
            };
        }
    }

    grads.reverse();
    Ok(GradientSet { layers: grads })
}

fn naive_normalize(delta: Vec<f64>) -> Vec<f64> {
    let mut l1 = 0.0f64;
    for d in &delta {
        l1 += d.abs();
    }
    if l1 > 1e-12 {
        delta.into_iter().map(|d| d / l1).collect()
    } else {
        delta
    }
}

//! Temporal backpropagation: deltas, gradient gating, and the SGD update.
//!
//! The backward pass treats firing times like activations. A weight only
//! receives gradient when its presynaptic spike could have contributed to the
//! postsynaptic spike (`t_i <= t_j`) and the postsynaptic neuron genuinely
//! fired before the end of the window (`t_j < t_max`); everything else is
//! gated to zero. Deltas flow backward through the same causality indicator.

use crate::encoding::{SimGrid, SpikeVector};
use crate::error::{Result, S4nnError};
use crate::forward::NetworkTrace;
use crate::network::{LayerParams, Matrix, NetworkParams};
use crate::objective::{compute_error, TargetVector};

pub type DeltaVector = Vec<f64>;

/// Per-layer gradient matrices, shape-matched to the network's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Matrix<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        GradientSet {
            layers: params
                .layers
                .iter()
                .map(|l| Matrix::filled(l.n_post(), l.n_pre(), 0.0f64))
                .collect(),
        }
    }
}

/// Backward-pass switches. Deltas are normalized at every layer by default;
/// each layer kind can be opted out independently. Raw output deltas are
/// bounded by the error scale but leave the output layer learning far faster
/// than the hidden layers it feeds on, which starves them.
#[derive(Debug, Clone, Copy)]
pub struct BackwardConfig {
    pub grid: SimGrid,
    pub normalize_hidden: bool,
    pub normalize_output: bool,
}

impl BackwardConfig {
    pub fn new(grid: SimGrid) -> Self {
        BackwardConfig {
            grid,
            normalize_hidden: true,
            normalize_output: true,
        }
    }
}

/// Output-layer deltas are the negated temporal errors.
pub fn output_deltas(errors: &[f64]) -> DeltaVector {
    errors.iter().map(|e| -e).collect()
}

/// Propagates deltas one layer down: `delta_j = sum_k delta_k * w_kj` over
/// next-layer neurons k whose spike did not precede neuron j's
/// (`t_j <= t_k`, fake times participating as `t_max`).
pub fn hidden_deltas(
    deltas_next: &[f64],
    layer_next: &LayerParams,
    times_here: &SpikeVector,
    times_next: &SpikeVector,
) -> Result<DeltaVector> {
    if deltas_next.len() != layer_next.n_post()
        || times_next.len() != layer_next.n_post()
        || times_here.len() != layer_next.n_pre()
    {
        return Err(S4nnError::Shape(format!(
            "hidden delta shapes: layer is {}x{}, got {} deltas, {} pre times, {} post times",
            layer_next.n_post(),
            layer_next.n_pre(),
            deltas_next.len(),
            times_here.len(),
            times_next.len()
        )));
    }
    let mut deltas = vec![0.0f64; layer_next.n_pre()];
    for (j, delta) in deltas.iter_mut().enumerate() {
        let t_j = times_here.times[j];
        let mut acc = 0.0f64;
        for (k, &d_k) in deltas_next.iter().enumerate() {
            if t_j <= times_next.times[k] {
                acc += d_k * f64::from(layer_next.weights[(k, j)]);
            }
        }
        *delta = acc;
    }
    Ok(deltas)
}

const NORM_GUARD: f64 = 1e-12;

/// Rescales deltas by their L1 norm; a vector at or below the guard is
/// returned unchanged. Keeps signs and the ordering of magnitudes.
pub fn normalize_deltas(deltas: DeltaVector) -> DeltaVector {
    let l1: f64 = deltas.iter().map(|d| d.abs()).sum();
    if l1 > NORM_GUARD {
        deltas.into_iter().map(|d| d / l1).collect()
    } else {
        deltas
    }
}

/// Gradient of the loss for one weight layer. `grad[j][i] = -delta_j` when
/// postsynaptic neuron j fired a real spike before `t_max` and presynaptic
/// neuron i spiked no later; otherwise zero. Fake spikes sit at `t_max` on
/// both sides, so they can never pass the gate.
pub fn weight_gradients(
    deltas: &[f64],
    pre: &SpikeVector,
    post: &SpikeVector,
    t_max: u32,
) -> Matrix<f64> {
    let mut grad = Matrix::filled(post.len(), pre.len(), 0.0f64);
    fill_weight_gradients(deltas, pre, post, t_max, &mut grad);
    grad
}

fn fill_weight_gradients(
    deltas: &[f64],
    pre: &SpikeVector,
    post: &SpikeVector,
    t_max: u32,
    grad: &mut Matrix<f64>,
) {
    grad.fill(0.0);
    for j in 0..post.len() {
        let t_j = post.times[j];
        let d = deltas[j];
        if d == 0.0 || t_j >= t_max {
            continue;
        }
        let row = grad.row_mut(j);
        for (i, &t_i) in pre.times.iter().enumerate() {
            if t_i <= t_j {
                row[i] = -d;
            }
        }
    }
}

/// One stochastic update in place: `w <- w - eta * (grad + 2 * lambda * w)`.
/// A non-finite result aborts with a divergence error before any further
/// weights are touched.
pub fn apply_update(
    params: &mut NetworkParams,
    grads: &GradientSet,
    eta: f64,
    lambda: f64,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() {
        return Err(S4nnError::Shape(format!(
            "{} gradient layers for {} weight layers",
            grads.layers.len(),
            params.layers.len()
        )));
    }
    for (k, (layer, grad)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        if grad.rows() != layer.n_post() || grad.cols() != layer.n_pre() {
            return Err(S4nnError::Shape(format!(
                "gradient for layer {k} is {}x{}, weights are {}x{}",
                grad.rows(),
                grad.cols(),
                layer.n_post(),
                layer.n_pre()
            )));
        }
        for (w, &g) in layer
            .weights
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
        {
            let old = f64::from(*w);
            let new = old - eta * (g + 2.0 * lambda * old);
            if !new.is_finite() {
                return Err(S4nnError::Divergence(format!(
                    "weight update in layer {k} produced {new} (was {old}, grad {g})"
                )));
            }
            *w = new as f32;
        }
    }
    Ok(())
}

/// Full backward pass over a forward trace: error at the output, deltas
/// propagated layer by layer with optional normalization, and the gated
/// gradient matrix for every weight layer. Weights are not touched.
pub fn backward(
    trace: &NetworkTrace,
    params: &NetworkParams,
    targets: &TargetVector,
    cfg: BackwardConfig,
) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    backward_into(trace, params, targets, cfg, &mut grads)?;
    Ok(grads)
}

/// [`backward`] writing into a caller-owned buffer, so a training loop can
/// reuse one `GradientSet` across samples.
pub fn backward_into(
    trace: &NetworkTrace,
    params: &NetworkParams,
    targets: &TargetVector,
    cfg: BackwardConfig,
    grads: &mut GradientSet,
) -> Result<()> {
    if trace.layers.len() != params.layers.len() || grads.layers.len() != params.layers.len() {
        return Err(S4nnError::Shape(format!(
            "trace has {} layers, gradient buffer {}, network {}",
            trace.layers.len(),
            grads.layers.len(),
            params.layers.len()
        )));
    }
    let t_max = cfg.grid.t_max;
    let out = trace.output();
    let errors = compute_error(targets, &out.spikes.times, t_max)?;
    let mut delta = output_deltas(&errors);
    if cfg.normalize_output {
        delta = normalize_deltas(delta);
    }

    let n_layers = params.layers.len();
    for k in (0..n_layers).rev() {
        let pre = if k == 0 {
            &trace.input
        } else {
            &trace.layers[k - 1].spikes
        };
        let post = &trace.layers[k].spikes;
        if grads.layers[k].rows() != post.len() || grads.layers[k].cols() != pre.len() {
            return Err(S4nnError::Shape(format!(
                "gradient buffer for layer {k} is {}x{}, trace wants {}x{}",
                grads.layers[k].rows(),
                grads.layers[k].cols(),
                post.len(),
                pre.len()
            )));
        }
        fill_weight_gradients(&delta, pre, post, t_max, &mut grads.layers[k]);
        if k > 0 {
            delta = hidden_deltas(&delta, &params.layers[k], pre, post)?;
            if cfg.normalize_hidden {
                delta = normalize_deltas(delta);
            }
        }
    }
    Ok(())
}

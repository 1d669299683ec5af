//! Event-driven forward pass.
//!
//! Neurons are non-leaky integrators: presynaptic spikes only ever add to the
//! membrane potential, so a layer can be simulated by walking each
//! postsynaptic neuron along the time-sorted list of incoming spikes instead
//! of stepping a clock over the whole grid. Simultaneous arrivals are summed
//! before the threshold test, and the first timestep where the running sum
//! reaches threshold is the (single) firing time. Work is proportional to the
//! number of spikes, not to `t_max`, and the accumulation order (time
//! ascending, presynaptic index ascending within a timestep) matches the dense
//! clock simulation in [`crate::reference`] term for term, so both engines
//! produce identical floating-point potentials and identical firing times.

use crate::encoding::{SimGrid, SpikeVector};
use crate::error::{Result, S4nnError};
use crate::network::{LayerParams, NetworkParams};

/// One layer's response: firing times (fake entries pinned at `t_max`) and the
/// membrane potential at the moment each time was recorded. For a neuron that
/// fired this is the potential at its firing step; for a silent neuron it is
/// the total drive received by `t_max`, which stays below threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub spikes: SpikeVector,
    pub potentials: Vec<f64>,
}

/// Full forward record for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrace {
    pub input: SpikeVector,
    pub layers: Vec<LayerTrace>,
    /// Time of the earliest output spike; `t_max` if the output stayed silent.
    pub decision_time: u32,
    /// Real spikes across input, hidden, and output populations with time at
    /// or before `decision_time`.
    pub spikes_at_decision: usize,
}

impl NetworkTrace {
    pub fn output(&self) -> &LayerTrace {
        self.layers.last().expect("network has at least one layer")
    }
}

/// Simulates one layer. Presynaptic fake spikes inject no current. Real
/// firing happens strictly before `t_max`: the final step only accumulates
/// potential, so a neuron first reaching threshold there is still recorded as
/// silent, with a fake spike at `t_max`. That keeps `t_max` the "sometime
/// after the simulation" slot the learning rule relies on.
pub fn forward_layer(pre: &SpikeVector, layer: &LayerParams, grid: SimGrid) -> Result<LayerTrace> {
    check_pre(pre, layer, grid)?;

    let mut arrivals: Vec<(u32, usize)> = pre
        .times
        .iter()
        .zip(&pre.fake)
        .enumerate()
        .filter(|(_, (_, fake))| !**fake)
        .map(|(i, (&t, _))| (t, i))
        .collect();
    arrivals.sort_unstable();

    let theta = f64::from(layer.threshold);
    let n_post = layer.n_post();
    let mut times = vec![grid.t_max; n_post];
    let mut fake = vec![true; n_post];
    let mut potentials = vec![0.0f64; n_post];

    for j in 0..n_post {
        let w = layer.weights.row(j);
        let mut v = 0.0f64;
        let mut pos = 0;
        while pos < arrivals.len() {
            let t = arrivals[pos].0;
            while pos < arrivals.len() && arrivals[pos].0 == t {
                v += f64::from(w[arrivals[pos].1]);
                pos += 1;
            }
            if v >= theta && t < grid.t_max {
                times[j] = t;
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

pub(crate) fn check_pre(pre: &SpikeVector, layer: &LayerParams, grid: SimGrid) -> Result<()> {
    if pre.len() != layer.n_pre() {
        return Err(S4nnError::Shape(format!(
            "layer expects {} presynaptic neurons, got {}",
            layer.n_pre(),
            pre.len()
        )));
    }
    if let Some(&t) = pre.times.iter().find(|&&t| t > grid.t_max) {
        return Err(S4nnError::Shape(format!(
            "presynaptic spike at time {t} lies beyond t_max={}",
            grid.t_max
        )));
    }
    Ok(())
}

/// Assembles the per-sample trace and its decision metrics from the simulated
/// layer responses. Shared by both engines so the metric definitions cannot
/// drift apart.
pub(crate) fn finish_trace(
    input: SpikeVector,
    layers: Vec<LayerTrace>,
    grid: SimGrid,
) -> NetworkTrace {
    let decision_time = layers
        .last()
        .map(|out| out.spikes.times.iter().copied().min().unwrap_or(grid.t_max))
        .unwrap_or(grid.t_max);
    let spikes_at_decision = input.real_count_through(decision_time)
        + layers
            .iter()
            .map(|l| l.spikes.real_count_through(decision_time))
            .sum::<usize>();
    NetworkTrace {
        input,
        layers,
        decision_time,
        spikes_at_decision,
    }
}

/// Runs the whole stack on one encoded input and derives the decision
/// metrics.
pub fn forward_network(
    input: &SpikeVector,
    params: &NetworkParams,
    grid: SimGrid,
) -> Result<NetworkTrace> {
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut current = input.clone();
    for layer in &params.layers {
        let trace = forward_layer(&current, layer, grid)?;
        current = trace.spikes.clone();
        layers.push(trace);
    }
    Ok(finish_trace(input.clone(), layers, grid))
}

/// Predicted class: the output neuron that fired first. Ties break toward the
/// higher potential at the recorded time, then toward the lower index; with
/// an all-silent output this reduces to comparing accumulated drive at
/// `t_max`.
pub fn classify(trace: &NetworkTrace) -> usize {
    let out = trace.output();
    let mut best = 0;
    for j in 1..out.spikes.len() {
        let better = match out.spikes.times[j].cmp(&out.spikes.times[best]) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => out.potentials[j] > out.potentials[best],
        };
        if better {
            best = j;
        }
    }
    best
}

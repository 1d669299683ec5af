//! Relative target times, temporal error, and the training loss.

use crate::encoding::SpikeVector;
use crate::error::{Result, S4nnError};
use crate::network::NetworkParams;

/// Desired firing time per output neuron, on the same grid as spike times.
pub type TargetVector = Vec<u32>;

/// Builds targets relative to the earliest output spike. The correct neuron
/// is asked to fire at the minimum firing time `tau`; a wrong neuron that
/// fired within `gamma` steps of `tau` is pushed out to `tau + gamma`, while
/// later wrong neurons keep their own time (no pressure once the margin is
/// met). With a fully silent output the correct neuron is pulled toward
/// `t_max - gamma` and the rest pinned at `t_max`. Targets never leave
/// `[0, t_max]`.
pub fn relative_targets(
    output: &SpikeVector,
    correct: usize,
    gamma: u32,
    t_max: u32,
) -> Result<TargetVector> {
    if correct >= output.len() {
        return Err(S4nnError::Shape(format!(
            "correct class {correct} out of range for {} output neurons",
            output.len()
        )));
    }
    if gamma >= t_max {
        return Err(S4nnError::Config(format!(
            "margin gamma={gamma} must be smaller than t_max={t_max}"
        )));
    }

    let any_real = output.fake.iter().any(|f| !f);
    if !any_real {
        let mut targets = vec![t_max; output.len()];
        targets[correct] = t_max - gamma;
        return Ok(targets);
    }

    let tau = *output.times.iter().min().expect("non-empty output");
    let pushed = (tau + gamma).min(t_max);
    let targets = output
        .times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            if j == correct {
                tau
            } else if t < tau + gamma {
                pushed
            } else {
                t
            }
        })
        .collect();
    Ok(targets)
}

/// Temporal error per output neuron, `e_j = (T_j - t_j) / t_max`. Positive
/// error asks the neuron to fire later, negative earlier.
pub fn compute_error(targets: &[u32], times: &[u32], t_max: u32) -> Result<Vec<f64>> {
    if times.len() != targets.len() {
        return Err(S4nnError::Shape(format!(
            "{} targets vs {} firing times",
            targets.len(),
            times.len()
        )));
    }
    Ok(targets
        .iter()
        .zip(times)
        .map(|(&target, &t)| (f64::from(target) - f64::from(t)) / f64::from(t_max))
        .collect())
}

pub fn sum_squared_error(errors: &[f64]) -> f64 {
    errors.iter().map(|e| e * e).sum()
}

/// Training loss for one sample: squared temporal error plus L2 weight decay,
/// `1/2 * sum(e^2) + lambda * sum(w^2)`.
pub fn loss(errors: &[f64], params: &NetworkParams, lambda: f64) -> f64 {
    let weight_norm: f64 = params
        .layers
        .iter()
        .flat_map(|l| l.weights.as_slice())
        .map(|&w| f64::from(w) * f64::from(w))
        .sum();
    0.5 * sum_squared_error(errors) + lambda * weight_norm
}

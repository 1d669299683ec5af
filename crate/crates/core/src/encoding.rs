//! Time-to-first-spike intensity encoding and input jitter.

use rand::Rng;

use crate::error::{Result, S4nnError};

/// Discrete simulation grid: time steps run over `0..=t_max`, pixel
/// intensities over `0..=i_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimGrid {
    pub t_max: u32,
    pub i_max: u32,
}

impl SimGrid {
    pub fn new(t_max: u32, i_max: u32) -> Result<Self> {
        if t_max == 0 || i_max == 0 {
            return Err(S4nnError::Config(format!(
                "simulation grid needs t_max >= 1 and i_max >= 1, got t_max={t_max}, i_max={i_max}"
            )));
        }
        Ok(SimGrid { t_max, i_max })
    }
}

impl Default for SimGrid {
    fn default() -> Self {
        SimGrid {
            t_max: 256,
            i_max: 255,
        }
    }
}

/// Firing times for one population, one spike per neuron. A `fake` entry marks
/// a neuron that never crossed threshold: its recorded time is `t_max` for
/// bookkeeping, but it injects no current downstream and is excluded from
/// spike counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeVector {
    pub times: Vec<u32>,
    pub fake: Vec<bool>,
}

impl SpikeVector {
    pub fn real(times: Vec<u32>) -> Self {
        let fake = vec![false; times.len()];
        SpikeVector { times, fake }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn real_count(&self) -> usize {
        self.fake.iter().filter(|f| !**f).count()
    }

    /// Real spikes with time at or before `cutoff`.
    pub fn real_count_through(&self, cutoff: u32) -> usize {
        self.times
            .iter()
            .zip(&self.fake)
            .filter(|(t, fake)| !**fake && **t <= cutoff)
            .count()
    }
}

/// Encodes pixel intensities as first-spike times: brighter pixels fire
/// earlier, `t = floor((i_max - I) * t_max / i_max)`. Every input neuron
/// emits a real spike; intensity 0 lands exactly on `t_max`.
pub fn encode_image(pixels: &[u8], grid: SimGrid) -> SpikeVector {
    let times = pixels
        .iter()
        .map(|&p| {
            let inverted = grid.i_max.saturating_sub(u32::from(p)) as u64;
            (inverted * u64::from(grid.t_max) / u64::from(grid.i_max)) as u32
        })
        .collect();
    SpikeVector::real(times)
}

/// Shifts each real spike by an integer drawn uniformly from `[-j_max, j_max]`,
/// clamping the result to `[0, t_max]`. Fake spikes stay pinned at `t_max`.
pub fn apply_jitter(spikes: &mut SpikeVector, j_max: u32, grid: SimGrid, rng: &mut impl Rng) {
    if j_max == 0 {
        return;
    }
    let j = i64::from(j_max);
    for (time, fake) in spikes.times.iter_mut().zip(&spikes.fake) {
        if *fake {
            continue;
        }
        let shifted = i64::from(*time) + rng.random_range(-j..=j);
        *time = shifted.clamp(0, i64::from(grid.t_max)) as u32;
    }
}

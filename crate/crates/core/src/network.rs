//! Network parameters: weight matrices, thresholds, initialization, and the
//! binary checkpoint format.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Result, S4nnError};
use crate::seeds;

/// Dense row-major matrix; rows index postsynaptic neurons, columns
/// presynaptic neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Copy> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, value: T) {
        self.data.fill(value);
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// One fully connected layer: weights plus a scalar firing threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Matrix<f32>,
    pub threshold: f32,
}

impl LayerParams {
    pub fn n_pre(&self) -> usize {
        self.weights.cols()
    }

    pub fn n_post(&self) -> usize {
        self.weights.rows()
    }
}

/// Full feed-forward stack. Layer `k` maps population `k` to population
/// `k + 1`; consecutive layers agree on shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    /// Population sizes from input to output, e.g. `[784, 400, 10]`.
    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.layers[0].n_pre()];
        arch.extend(self.layers.iter().map(|l| l.n_post()));
        arch
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_post())
    }

    fn validate_chain(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(S4nnError::Shape("network has no layers".into()));
        }
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].n_post() != pair[1].n_pre() {
                return Err(S4nnError::Shape(format!(
                    "layer {} feeds {} neurons into layer {} expecting {}",
                    k,
                    pair[0].n_post(),
                    k + 1,
                    pair[1].n_pre()
                )));
            }
        }
        Ok(())
    }
}

/// Uniform init ranges, one `[lo, hi]` pair per weight layer, plus the seed
/// the draws derive from.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    pub ranges: Vec<(f32, f32)>,
    pub seed: u64,
}

fn draw_uniform(rng: &mut impl Rng, lo: f32, hi: f32) -> f32 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn fill_row(rng: &mut impl Rng, row: &mut [f32], lo: f32, hi: f32) {
    for w in row {
        *w = draw_uniform(rng, lo, hi);
    }
}

/// Builds a network for `arch` with weights drawn uniformly per layer from
/// `init.ranges` and every threshold set to `theta`. Draw order is fixed
/// (layers outer, rows then columns inner), so equal seeds give bitwise-equal
/// networks.
pub fn init_network(arch: &[usize], init: &InitSpec, theta: f32) -> Result<NetworkParams> {
    if arch.len() < 2 {
        return Err(S4nnError::Config(format!(
            "architecture needs at least input and output populations, got {arch:?}"
        )));
    }
    if arch.contains(&0) {
        return Err(S4nnError::Config(format!(
            "architecture has an empty population: {arch:?}"
        )));
    }
    if init.ranges.len() != arch.len() - 1 {
        return Err(S4nnError::Config(format!(
            "{} weight layers need {} init ranges, got {}",
            arch.len() - 1,
            arch.len() - 1,
            init.ranges.len()
        )));
    }
    for (k, &(lo, hi)) in init.ranges.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(S4nnError::Config(format!(
                "init range for weight layer {} must be a finite [lo, hi] with lo <= hi, got [{lo}, {hi}]",
                k + 1
            )));
        }
    }
    if !theta.is_finite() || theta <= 0.0 {
        return Err(S4nnError::Config(format!(
            "threshold must be finite and positive, got {theta}"
        )));
    }

    let mut rng = seeds::rng_for(init.seed, seeds::STREAM_INIT);
    let layers = arch
        .windows(2)
        .zip(&init.ranges)
        .map(|(dims, &(lo, hi))| {
            let (n_pre, n_post) = (dims[0], dims[1]);
            let mut weights = Matrix::filled(n_post, n_pre, 0.0f32);
            for r in 0..n_post {
                fill_row(&mut rng, weights.row_mut(r), lo, hi);
            }
            LayerParams {
                weights,
                threshold: theta,
            }
        })
        .collect();
    Ok(NetworkParams { layers })
}

/// Redraws the incoming weight row of one neuron from its layer's init range.
/// Used to revive neurons that stayed silent across a whole epoch.
pub fn reinit_neuron(
    params: &mut NetworkParams,
    layer: usize,
    neuron: usize,
    init: &InitSpec,
    rng: &mut impl Rng,
) -> Result<()> {
    let n_layers = params.layers.len();
    let layer_params = params.layers.get_mut(layer).ok_or_else(|| {
        S4nnError::Shape(format!("layer {layer} out of range for {n_layers} layers"))
    })?;
    if neuron >= layer_params.n_post() {
        return Err(S4nnError::Shape(format!(
            "neuron {neuron} out of range for layer {layer} with {} neurons",
            layer_params.n_post()
        )));
    }
    let &(lo, hi) = init.ranges.get(layer).ok_or_else(|| {
        S4nnError::Config(format!("no init range recorded for weight layer {layer}"))
    })?;
    fill_row(rng, layer_params.weights.row_mut(neuron), lo, hi);
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"S4NN";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the network in the versioned little-endian binary format:
/// magic `S4NN`, format version, layer count, then per layer `n_pre`,
/// `n_post`, threshold, and the row-major weight block.
pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    params.validate_chain()?;
    let mut buf = Vec::with_capacity(
        16 + params
            .layers
            .iter()
            .map(|l| 12 + 4 * l.n_pre() * l.n_post())
            .sum::<usize>(),
    );
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        buf.extend_from_slice(&(layer.n_pre() as u32).to_le_bytes());
        buf.extend_from_slice(&(layer.n_post() as u32).to_le_bytes());
        buf.extend_from_slice(&layer.threshold.to_le_bytes());
        for &w in layer.weights.as_slice() {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }
    let mut file = fs::File::create(path).map_err(|e| S4nnError::io_at(e, path))?;
    file.write_all(&buf).map_err(|e| S4nnError::io_at(e, path))?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]. Weights round-trip
/// bit-exactly.
pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let buf = fs::read(path).map_err(|e| S4nnError::io_at(e, path))?;
    let mut r = crate::bytes::ByteReader::new(&buf, path);

    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        let mut got = [0u8; 4];
        got.copy_from_slice(magic);
        return Err(S4nnError::BadMagic {
            path: path.to_path_buf(),
            expected: u32::from_be_bytes(*CHECKPOINT_MAGIC),
            got: u32::from_be_bytes(got),
        });
    }
    let version = r.u32_le("format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(S4nnError::Checkpoint(format!(
            "{}: unsupported format version {version}, this build reads version {CHECKPOINT_VERSION}",
            path.display()
        )));
    }
    let n_layers = r.u32_le("layer count")? as usize;
    if n_layers == 0 {
        return Err(S4nnError::Checkpoint(format!(
            "{}: checkpoint declares zero layers",
            path.display()
        )));
    }

    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let n_pre = r.u32_le("layer n_pre")? as usize;
        let n_post = r.u32_le("layer n_post")? as usize;
        let threshold = r.f32_le("layer threshold")?;
        if n_pre == 0 || n_post == 0 {
            return Err(S4nnError::Checkpoint(format!(
                "{}: layer with empty dimension {n_post}x{n_pre}",
                path.display()
            )));
        }
        let block = r.take(4 * n_pre * n_post, "weight block")?;
        let weights = Matrix::from_fn(n_post, n_pre, |row, col| {
            let at = 4 * (row * n_pre + col);
            f32::from_le_bytes([block[at], block[at + 1], block[at + 2], block[at + 3]])
        });
        layers.push(LayerParams { weights, threshold });
    }
    if r.pos != buf.len() {
        return Err(S4nnError::Malformed {
            path: path.to_path_buf(),
            offset: r.pos,
            reason: format!("{} trailing bytes after last layer", buf.len() - r.pos),
        });
    }

    let params = NetworkParams { layers };
    params.validate_chain()?;
    Ok(params)
}

//! Flat `key = value` run configuration with the MNIST defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use s4nn_core::encoding::SimGrid;
use s4nn_core::error::{Result, S4nnError};
use s4nn_core::network::InitSpec;
use s4nn_core::trainer::TrainConfig;

/// Effective run configuration. Every field has a default (the MNIST recipe:
/// 784-400-10, t_max 256, theta 100, eta 0.2, gamma 3, lambda 1e-6), so an
/// empty config is a valid full run; architectures with extra weight layers
/// must spell out the extra init ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub arch: Vec<usize>,
    pub t_max: u32,
    pub theta: f32,
    pub eta: f64,
    pub gamma: u32,
    pub lambda: f64,
    pub epochs: u32,
    pub init_ranges: Vec<(f32, f32)>,
    pub seed: u64,
    pub val_holdout: usize,
    pub normalize_hidden: bool,
    pub normalize_output: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            arch: vec![784, 400, 10],
            t_max: 256,
            theta: 100.0,
            eta: 0.2,
            gamma: 3,
            lambda: 1e-6,
            epochs: 100,
            init_ranges: vec![(0.0, 5.0), (0.0, 50.0)],
            seed: 1,
            val_holdout: 5000,
            normalize_hidden: true,
            normalize_output: true,
        }
    }
}

const DEFAULT_RANGES: [(f32, f32); 2] = [(0.0, 5.0), (0.0, 50.0)];

fn bad(key: &str, value: &str, what: &str) -> S4nnError {
    S4nnError::Config(format!("config key {key}: cannot parse '{value}' as {what}"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                S4nnError::Config(format!("config line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if pairs.insert(key.clone(), value).is_some() {
                return Err(S4nnError::Config(format!("duplicate config key: {key}")));
            }
        }
        Config::from_pairs(pairs)
    }

    fn from_pairs(mut pairs: BTreeMap<String, String>) -> Result<Config> {
        let mut cfg = Config::default();

        if let Some(v) = pairs.remove("arch") {
            cfg.arch = v
                .split(',')
                .map(|part| {
                    let part = part.trim();
                    part.parse::<usize>()
                        .ok()
                        .filter(|&n| n > 0)
                        .ok_or_else(|| bad("arch", part, "a positive layer size"))
                })
                .collect::<Result<_>>()?;
            if cfg.arch.len() < 2 {
                return Err(S4nnError::Config(
                    "config key arch: need at least input and output populations".into(),
                ));
            }
        }

        macro_rules! scalar {
            ($key:literal, $field:ident, $ty:ty, $what:literal) => {
                if let Some(v) = pairs.remove($key) {
                    cfg.$field = v.parse::<$ty>().map_err(|_| bad($key, &v, $what))?;
                }
            };
        }
        scalar!("t_max", t_max, u32, "an integer");
        scalar!("theta", theta, f32, "a number");
        scalar!("eta", eta, f64, "a number");
        scalar!("gamma", gamma, u32, "an integer");
        scalar!("lambda", lambda, f64, "a number");
        scalar!("epochs", epochs, u32, "an integer");
        scalar!("seed", seed, u64, "an integer");
        scalar!("val_holdout", val_holdout, usize, "an integer");
        scalar!("normalize_hidden", normalize_hidden, bool, "true or false");
        scalar!("normalize_output", normalize_output, bool, "true or false");

        let weight_layers = cfg.arch.len() - 1;
        let mut ranges = Vec::with_capacity(weight_layers);
        for k in 1..=weight_layers {
            let lo_key = format!("init_lo_{k}");
            let hi_key = format!("init_hi_{k}");
            let default = DEFAULT_RANGES.get(k - 1);
            let lo = match pairs.remove(&lo_key) {
                Some(v) => v.parse::<f32>().map_err(|_| bad(&lo_key, &v, "a number"))?,
                None => {
                    default
                        .ok_or_else(|| {
                            S4nnError::Config(format!("missing config key: {lo_key}"))
                        })?
                        .0
                }
            };
            let hi = match pairs.remove(&hi_key) {
                Some(v) => v.parse::<f32>().map_err(|_| bad(&hi_key, &v, "a number"))?,
                None => {
                    default
                        .ok_or_else(|| {
                            S4nnError::Config(format!("missing config key: {hi_key}"))
                        })?
                        .1
                }
            };
            ranges.push((lo, hi));
        }
        cfg.init_ranges = ranges;

        if let Some(stray) = pairs.keys().next() {
            return Err(S4nnError::Config(format!("unknown config key: {stray}")));
        }
        Ok(cfg)
    }

    /// Canonical text form; reparsing it reproduces this config exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let arch = self
            .arch
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "arch = {arch}").unwrap();
        writeln!(out, "t_max = {}", self.t_max).unwrap();
        writeln!(out, "theta = {}", self.theta).unwrap();
        writeln!(out, "eta = {}", self.eta).unwrap();
        writeln!(out, "gamma = {}", self.gamma).unwrap();
        writeln!(out, "lambda = {}", self.lambda).unwrap();
        writeln!(out, "epochs = {}", self.epochs).unwrap();
        for (k, (lo, hi)) in self.init_ranges.iter().enumerate() {
            writeln!(out, "init_lo_{} = {lo}", k + 1).unwrap();
            writeln!(out, "init_hi_{} = {hi}", k + 1).unwrap();
        }
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "val_holdout = {}", self.val_holdout).unwrap();
        writeln!(out, "normalize_hidden = {}", self.normalize_hidden).unwrap();
        writeln!(out, "normalize_output = {}", self.normalize_output).unwrap();
        out
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            eta: self.eta,
            gamma: self.gamma,
            lambda: self.lambda,
            theta: self.theta,
            grid: SimGrid::new(self.t_max, 255)?,
            init: InitSpec {
                ranges: self.init_ranges.clone(),
                seed: self.seed,
            },
            seed: self.seed,
            revive_dead: true,
            normalize_hidden: self.normalize_hidden,
            normalize_output: self.normalize_output,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

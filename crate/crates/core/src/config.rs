//! Flat `key = value` run configuration shared by every CLI command.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected.
//! [`RunConfig::to_text`] writes every key, so the output doubles as the
//! effective-config record of a run.

use std::path::Path;

use crate::discriminator::{Architecture, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::markov::ConditioningRule;
use crate::optim::AmsgradConfig;
use crate::trainer::TrainingConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub qubits: Vec<usize>,
    pub layers: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub disc_updates: usize,
    pub gen_updates: usize,
    pub penalty_weight: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub disc_arch: Architecture,
    pub seq_len: usize,
    pub hidden_size: usize,
    pub recurrent_layers: usize,
    pub bidirectional: bool,
    pub dropout: f64,
    pub mlp_hidden: Vec<usize>,
    pub track_jsd: bool,
    pub sample_rate: f64,
    pub resample_interval: f64,
    pub levels: usize,
    pub states: usize,
    pub markov_rule: ConditioningRule,
    pub markov_length: usize,
    pub hist_bins: usize,
    pub log_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let disc = DiscriminatorConfig::lstm();
        let opt = AmsgradConfig::default();
        let train = TrainingConfig::default();
        Self {
            qubits: vec![3],
            layers: vec![1],
            epochs: train.epochs,
            batch_size: train.batch_size,
            seed: train.seed,
            disc_updates: train.disc_updates_per_batch,
            gen_updates: train.gen_updates_per_batch,
            penalty_weight: train.penalty_weight,
            learning_rate: opt.learning_rate,
            beta1: opt.beta1,
            beta2: opt.beta2,
            epsilon: opt.epsilon,
            disc_arch: Architecture::Mlp,
            seq_len: disc.input_length,
            hidden_size: disc.hidden_size,
            recurrent_layers: disc.num_recurrent_layers,
            bidirectional: disc.bidirectional,
            dropout: disc.dropout_rate,
            mlp_hidden: disc.mlp_hidden,
            track_jsd: train.track_jsd,
            sample_rate: crate::data::DEFAULT_SAMPLE_RATE,
            resample_interval: 10.0,
            levels: 8,
            states: 8,
            markov_rule: ConditioningRule::default(),
            markov_length: 100_000,
            hist_bins: 50,
            log_floor: crate::metrics::DEFAULT_LOG_FLOOR,
        }
    }
}

/// Parses `"3"`, `"3,4"` or an inclusive range `"1..5"`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::config(format!("bad grid `{s}`; use `3`, `3,4` or `1..5`"));
    let values: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|v| v.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if values.is_empty() {
        return Err(bad());
    }
    Ok(values)
}

fn list(xs: &[usize]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| Error::config(format!("bad list `{s}`"))))
        .collect()
}

impl RunConfig {
    pub const KEYS: [&'static str; 28] = [
        "qubits",
        "layers",
        "epochs",
        "batch_size",
        "seed",
        "disc_updates",
        "gen_updates",
        "penalty_weight",
        "learning_rate",
        "beta1",
        "beta2",
        "epsilon",
        "disc_arch",
        "seq_len",
        "hidden_size",
        "recurrent_layers",
        "bidirectional",
        "dropout",
        "mlp_hidden",
        "track_jsd",
        "sample_rate",
        "resample_interval",
        "levels",
        "states",
        "markov_rule",
        "markov_length",
        "hist_bins",
        "log_floor",
    ];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("bad value `{v}` for `{key}`")))
        }
        match key {
            "qubits" => self.qubits = parse_grid(value)?,
            "layers" => self.layers = parse_grid(value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "disc_updates" => self.disc_updates = num(key, value)?,
            "gen_updates" => self.gen_updates = num(key, value)?,
            "penalty_weight" => self.penalty_weight = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "disc_arch" => self.disc_arch = value.parse()?,
            "seq_len" => self.seq_len = num(key, value)?,
            "hidden_size" => self.hidden_size = num(key, value)?,
            "recurrent_layers" => self.recurrent_layers = num(key, value)?,
            "bidirectional" => self.bidirectional = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse_list(value)?,
            "track_jsd" => self.track_jsd = num(key, value)?,
            "sample_rate" => self.sample_rate = num(key, value)?,
            "resample_interval" => self.resample_interval = num(key, value)?,
            "levels" => self.levels = num(key, value)?,
            "states" => self.states = num(key, value)?,
            "markov_rule" => self.markov_rule = value.parse()?,
            "markov_length" => self.markov_length = num(key, value)?,
            "hist_bins" => self.hist_bins = num(key, value)?,
            "log_floor" => self.log_floor = num(key, value)?,
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "qubits" => list(&self.qubits),
            "layers" => list(&self.layers),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seed" => self.seed.to_string(),
            "disc_updates" => self.disc_updates.to_string(),
            "gen_updates" => self.gen_updates.to_string(),
            "penalty_weight" => format!("{:?}", self.penalty_weight),
            "learning_rate" => format!("{:?}", self.learning_rate),
            "beta1" => format!("{:?}", self.beta1),
            "beta2" => format!("{:?}", self.beta2),
            "epsilon" => format!("{:?}", self.epsilon),
            "disc_arch" => self.disc_arch.to_string(),
            "seq_len" => self.seq_len.to_string(),
            "hidden_size" => self.hidden_size.to_string(),
            "recurrent_layers" => self.recurrent_layers.to_string(),
            "bidirectional" => self.bidirectional.to_string(),
            "dropout" => format!("{:?}", self.dropout),
            "mlp_hidden" => list(&self.mlp_hidden),
            "track_jsd" => self.track_jsd.to_string(),
            "sample_rate" => format!("{:?}", self.sample_rate),
            "resample_interval" => format!("{:?}", self.resample_interval),
            "levels" => self.levels.to_string(),
            "states" => self.states.to_string(),
            "markov_rule" => self.markov_rule.to_string(),
            "markov_length" => self.markov_length.to_string(),
            "hist_bins" => self.hist_bins.to_string(),
            "log_floor" => format!("{:?}", self.log_floor),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(n + 1, format!("expected `key = value`, got `{line}`")))?;
            cfg.set(key.trim(), value).map_err(|e| match e {
                Error::Config(m) => Error::parse(n + 1, m),
                other => other,
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("every key is readable")))
            .collect()
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            architecture: self.disc_arch,
            input_length: match self.disc_arch {
                Architecture::Mlp => 1,
                Architecture::Lstm => self.seq_len,
            },
            hidden_size: self.hidden_size,
            num_recurrent_layers: self.recurrent_layers,
            bidirectional: self.bidirectional,
            dropout_rate: self.dropout,
            mlp_hidden: self.mlp_hidden.clone(),
        }
    }

    pub fn training(&self) -> TrainingConfig {
        let opt = AmsgradConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        };
        TrainingConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            disc_updates_per_batch: self.disc_updates,
            gen_updates_per_batch: self.gen_updates,
            penalty_weight: self.penalty_weight,
            generator_optimizer: opt,
            discriminator_optimizer: opt,
            track_jsd: self.track_jsd,
        }
    }

    /// Checks everything that can be checked before any compute.
    pub fn validate(&self) -> Result<()> {
        self.training().validate()?;
        self.discriminator().validate()?;
        for &q in &self.qubits {
            for &l in &self.layers {
                crate::generator::AnsatzConfig::new(q, l)?;
            }
        }
        if !self.levels.is_power_of_two() || self.levels < 2 {
            return Err(Error::config(format!("levels {} is not a power of two >= 2", self.levels)));
        }
        if self.states < 2 || self.hist_bins == 0 || self.markov_length == 0 {
            return Err(Error::config("states >= 2, hist_bins >= 1 and markov_length >= 1 required"));
        }
        if !(self.sample_rate > 0.0 && self.resample_interval > 0.0 && self.log_floor > 0.0) {
            return Err(Error::config("sample_rate, resample_interval and log_floor must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.learning_rate > 0.0) {
            return Err(Error::config("optimizer needs lr > 0 and betas in [0, 1)"));
        }
        Ok(())
    }
}

//! Training hyperparameters and their flat `key = value` text form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::real::Precision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Embedding size `R`.
    pub rank: usize,
    pub learning_rate: f64,
    /// Positive triples per batch; each brings `n_negatives` corruptions.
    pub batch_size: usize,
    pub n_negatives: usize,
    /// Decoupled weight decay applied to touched rows.
    pub l2_coeff: f64,
    /// Epochs between learning-rate decays.
    pub lr_decay_step: usize,
    pub lr_decay_gamma: f64,
    pub n_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Standard deviation of the normal initialization.
    pub init_scale: f64,
    pub precision: Precision,
    /// Reject corruptions that hit a known training triple.
    pub filtered_negatives: bool,
    /// Single-threaded, bitwise reproducible training.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rank: 200,
            learning_rate: 0.01,
            batch_size: 156,
            n_negatives: 6,
            l2_coeff: 0.001,
            lr_decay_step: 3,
            lr_decay_gamma: 0.8,
            n_epochs: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            init_scale: 0.05,
            precision: Precision::F32,
            filtered_negatives: false,
            deterministic: true,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "rank",
    "learning_rate",
    "batch_size",
    "n_negatives",
    "l2_coeff",
    "lr_decay_step",
    "lr_decay_gamma",
    "n_epochs",
    "seed",
    "beta1",
    "beta2",
    "epsilon",
    "init_scale",
    "precision",
    "filtered_negatives",
    "deterministic",
];

/// Every problem found in a config, reported together.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration:\n  {}", .0.join("\n  "))]
pub struct ConfigErrors(pub Vec<String>);

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V, String>
where
    V::Err: std::fmt::Display,
{
    value
        .parse::<V>()
        .map_err(|e| format!("{key}: cannot parse `{value}`: {e}"))
}

impl TrainConfig {
    /// Table of defaults for the WN18RR benchmark.
    pub fn wn18rr() -> Self {
        Self {
            learning_rate: 0.009,
            batch_size: 128,
            n_negatives: 8,
            l2_coeff: 0.0,
            lr_decay_step: 15,
            lr_decay_gamma: 0.6,
            ..Self::default()
        }
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key.trim() {
            "rank" => self.rank = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "n_negatives" => self.n_negatives = parse_value(key, value)?,
            "l2_coeff" => self.l2_coeff = parse_value(key, value)?,
            "lr_decay_step" => self.lr_decay_step = parse_value(key, value)?,
            "lr_decay_gamma" => self.lr_decay_gamma = parse_value(key, value)?,
            "n_epochs" => self.n_epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "beta1" => self.beta1 = parse_value(key, value)?,
            "beta2" => self.beta2 = parse_value(key, value)?,
            "epsilon" => self.epsilon = parse_value(key, value)?,
            "init_scale" => self.init_scale = parse_value(key, value)?,
            "precision" => self.precision = parse_value(key, value)?,
            "filtered_negatives" => self.filtered_negatives = parse_value(key, value)?,
            "deterministic" => self.deterministic = parse_value(key, value)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Parses `key = value` lines over `self`. Blank lines and `#` comments
    /// are ignored. Parse and validation errors are collected together.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigErrors> {
        let mut errors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((key, value)) => {
                    if let Err(e) = self.set(key, value) {
                        errors.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => errors.push(format!("line {}: expected `key = value`, got `{line}`", i + 1)),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errors))
        }
    }

    /// Defaults overlaid with `text`, then validated. Parse and validation
    /// errors come back in one list.
    pub fn from_text(text: &str) -> Result<Self, ConfigErrors> {
        let mut cfg = Self::default();
        let mut errors = cfg.apply_text(text).err().map(|e| e.0).unwrap_or_default();
        if let Err(e) = cfg.validate() {
            errors.extend(e.0);
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigErrors(errors))
        }
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut e = Vec::new();
        if self.rank < 1 {
            e.push("rank must be >= 1".to_owned());
        }
        if self.batch_size < 1 {
            e.push("batch_size must be >= 1".to_owned());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            e.push("learning_rate must be finite and >= 0".to_owned());
        }
        if !(self.l2_coeff.is_finite() && self.l2_coeff >= 0.0) {
            e.push("l2_coeff must be finite and >= 0".to_owned());
        }
        if self.lr_decay_step < 1 {
            e.push("lr_decay_step must be >= 1".to_owned());
        }
        if !(self.lr_decay_gamma > 0.0 && self.lr_decay_gamma <= 1.0) {
            e.push("lr_decay_gamma must lie in (0, 1]".to_owned());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                e.push(format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            e.push("epsilon must be finite and > 0".to_owned());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            e.push("init_scale must be finite and >= 0".to_owned());
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(e))
        }
    }

    /// Canonical text: every key in declaration order, one per line.
    /// Floats use the shortest representation that round-trips.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("rank", &self.rank);
        line("learning_rate", &self.learning_rate);
        line("batch_size", &self.batch_size);
        line("n_negatives", &self.n_negatives);
        line("l2_coeff", &self.l2_coeff);
        line("lr_decay_step", &self.lr_decay_step);
        line("lr_decay_gamma", &self.lr_decay_gamma);
        line("n_epochs", &self.n_epochs);
        line("seed", &self.seed);
        line("beta1", &self.beta1);
        line("beta2", &self.beta2);
        line("epsilon", &self.epsilon);
        line("init_scale", &self.init_scale);
        line("precision", &self.precision);
        line("filtered_negatives", &self.filtered_negatives);
        line("deterministic", &self.deterministic);
        s
    }

    /// SHA-256 of [`TrainConfig::to_text`].
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    /// Entries per full batch: positives plus their corruptions.
    pub fn entries_per_batch(&self) -> usize {
        self.batch_size * (1 + self.n_negatives)
    }
}

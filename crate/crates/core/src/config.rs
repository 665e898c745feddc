//! `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::checkpoint::{sites_from_text, sites_to_text};
use crate::error::{Error, Result};
use crate::inference::DEFAULT_MAX_STEPS;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub min_len: usize,
    pub samples: usize,
    pub max_steps: usize,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            test_fraction: 0.15,
            split_seed: 0,
            min_len: 2,
            samples: 50,
            max_steps: DEFAULT_MAX_STEPS,
            threads: 1,
        }
    }
}

pub const KEYS: [&str; 20] = [
    "epochs",
    "batch_size",
    "seed",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "dropout_rate",
    "dropout_sites",
    "hidden",
    "layers",
    "clip_norm",
    "checkpoint_every",
    "track_heldout",
    "test_fraction",
    "split_seed",
    "min_len",
    "samples",
    "max_steps",
    "threads",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "" | "none" | "off" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "beta1" => t.adam.beta1 = parse(key, value)?,
            "beta2" => t.adam.beta2 = parse(key, value)?,
            "eps" => t.adam.eps = parse(key, value)?,
            "dropout_rate" => t.dropout_rate = parse(key, value)?,
            "dropout_sites" => t.sites = sites_from_text(value)?,
            "hidden" => t.hidden = parse(key, value)?,
            "layers" => t.layers = parse(key, value)?,
            "clip_norm" => t.clip_norm = optional(key, value)?,
            "checkpoint_every" => t.checkpoint_every = optional(key, value)?,
            "track_heldout" => t.track_heldout = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "split_seed" => self.split_seed = parse(key, value)?,
            "min_len" => self.min_len = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "max_steps" => self.max_steps = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies the lines of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let t = &self.train;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "lr = {}", t.adam.lr);
        let _ = writeln!(s, "beta1 = {}", t.adam.beta1);
        let _ = writeln!(s, "beta2 = {}", t.adam.beta2);
        let _ = writeln!(s, "eps = {}", t.adam.eps);
        let _ = writeln!(s, "dropout_rate = {}", t.dropout_rate);
        let _ = writeln!(s, "dropout_sites = {}", sites_to_text(t.sites));
        let _ = writeln!(s, "hidden = {}", t.hidden);
        let _ = writeln!(s, "layers = {}", t.layers);
        let _ = writeln!(s, "clip_norm = {}", opt(t.clip_norm.map(|c| c.to_string())));
        let _ = writeln!(
            s,
            "checkpoint_every = {}",
            opt(t.checkpoint_every.map(|c| c.to_string()))
        );
        let _ = writeln!(s, "track_heldout = {}", t.track_heldout);
        let _ = writeln!(s, "test_fraction = {}", self.test_fraction);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let _ = writeln!(s, "min_len = {}", self.min_len);
        let _ = writeln!(s, "samples = {}", self.samples);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }
}

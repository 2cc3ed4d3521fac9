//! Hyperparameters and the flat `key = value` config format.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. Keys accept `-` or `_` as word separator.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Ranks;
use crate::scheduler::{Balance, Strategy};

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    /// Tucker ranks; a single value applies to every mode.
    pub ranks: Vec<usize>,
    pub r_core: usize,
    pub lr_a: f64,
    pub lr_b: f64,
    pub reg_a: f64,
    pub reg_b: f64,
    /// Core batch size `M`; `None` uses every training entry.
    pub batch_m: Option<usize>,
    /// Fraction of each factor row's entries used per epoch.
    pub row_fraction: f64,
    pub epochs: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub threads: usize,
    pub balance: Balance,
    pub init_mean: f64,
    pub init_std: f64,
    /// Draw a fresh core batch for every mode instead of one per epoch.
    pub resample_per_mode: bool,
    pub incremental_residual: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            ranks: vec![5],
            r_core: 5,
            lr_a: 0.002,
            lr_b: 0.001,
            reg_a: 0.01,
            reg_b: 0.01,
            batch_m: Some(1),
            row_fraction: 1.0,
            epochs: 100,
            seed: 1,
            strategy: Strategy::Improved,
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            balance: Balance::Dynamic,
            init_mean: 0.5,
            init_std: 0.1,
            resample_per_mode: false,
            incremental_residual: false,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: {what}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "not a valid number"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl HyperParams {
    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key_norm = key.trim().replace('-', "_").to_ascii_lowercase();
        let value = value.trim();
        match key_norm.as_str() {
            "ranks" => {
                self.ranks = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<Vec<usize>>>()?;
            }
            "rcore" | "r_core" => self.r_core = parse_num(key, value)?,
            "lr_a" => self.lr_a = parse_num(key, value)?,
            "lr_b" => self.lr_b = parse_num(key, value)?,
            "reg_a" => self.reg_a = parse_num(key, value)?,
            "reg_b" => self.reg_b = parse_num(key, value)?,
            "batch_m" => {
                self.batch_m = if value.eq_ignore_ascii_case("all") {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "row_fraction" => self.row_fraction = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "threads" => self.threads = parse_num(key, value)?,
            "balance" => self.balance = value.parse()?,
            "init_mean" => self.init_mean = parse_num(key, value)?,
            "init_std" => self.init_std = parse_num(key, value)?,
            "resample_per_mode" => self.resample_per_mode = parse_bool(key, value)?,
            "incremental_residual" => self.incremental_residual = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", lineno + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Effective settings as `(key, value)` pairs, parseable by [`Self::set`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let ranks = self.ranks.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let batch = self.batch_m.map_or_else(|| "all".to_string(), |m| m.to_string());
        [
            ("ranks", ranks),
            ("rcore", self.r_core.to_string()),
            ("lr_a", self.lr_a.to_string()),
            ("lr_b", self.lr_b.to_string()),
            ("reg_a", self.reg_a.to_string()),
            ("reg_b", self.reg_b.to_string()),
            ("batch_m", batch),
            ("row_fraction", self.row_fraction.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("strategy", self.strategy.to_string()),
            ("threads", self.threads.to_string()),
            ("balance", self.balance.to_string()),
            ("init_mean", self.init_mean.to_string()),
            ("init_std", self.init_std.to_string()),
            ("resample_per_mode", self.resample_per_mode.to_string()),
            ("incremental_residual", self.incremental_residual.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Ranks for a tensor of the given order.
    pub fn ranks_for(&self, order: usize) -> Result<Ranks> {
        let dims = match self.ranks.len() {
            1 => vec![self.ranks[0]; order],
            l if l == order => self.ranks.clone(),
            l => {
                return Err(Error::Config(format!(
                    "{l} ranks given for an order-{order} tensor"
                )))
            }
        };
        Ranks::new(dims, self.r_core).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return cfg(format!("ranks {:?} must be positive", self.ranks));
        }
        let min = *self.ranks.iter().min().unwrap_or(&0);
        if self.r_core == 0 || self.r_core > min {
            return cfg(format!("rcore {} must lie in 1..={min}", self.r_core));
        }
        for (name, v) in [("lr_a", self.lr_a), ("lr_b", self.lr_b)] {
            if !(v > 0.0 && v.is_finite()) {
                return cfg(format!("{name} = {v} must be a finite positive rate"));
            }
        }
        for (name, v) in [("reg_a", self.reg_a), ("reg_b", self.reg_b)] {
            if !(v >= 0.0 && v.is_finite()) {
                return cfg(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.batch_m == Some(0) {
            return cfg("batch_m must be at least 1".into());
        }
        if !(self.row_fraction > 0.0 && self.row_fraction <= 1.0) {
            return cfg(format!("row_fraction {} outside (0, 1]", self.row_fraction));
        }
        if self.epochs == 0 {
            return cfg("epochs must be at least 1".into());
        }
        if self.threads == 0 {
            return cfg("threads must be at least 1".into());
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite() && self.init_mean.is_finite()) {
            return cfg(format!(
                "initialization N({}, {}²) needs a positive finite stddev",
                self.init_mean, self.init_std
            ));
        }
        Ok(())
    }
}

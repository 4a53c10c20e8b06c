//! Experiment configuration: defaults, flat `key=value` files and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rspider::{Error, IfoConvention, MapMode, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Rsgd,
    Rsvrg,
    /// SVRG with the normalization retraction.
    Vrpca,
    Spider,
    SpiderGd1,
    SpiderGd2,
}

impl Algo {
    pub const ALL: [Algo; 6] = [
        Algo::Rsgd,
        Algo::Rsvrg,
        Algo::Vrpca,
        Algo::Spider,
        Algo::SpiderGd1,
        Algo::SpiderGd2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Rsgd => "rsgd",
            Algo::Rsvrg => "rsvrg",
            Algo::Vrpca => "vrpca",
            Algo::Spider => "spider",
            Algo::SpiderGd1 => "spider-gd1",
            Algo::SpiderGd2 => "spider-gd2",
        }
    }

    /// The map mode a run uses when none is configured.
    pub fn default_map_mode(self) -> MapMode {
        match self {
            Algo::Vrpca => MapMode::Retraction,
            _ => MapMode::Exponential,
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown algorithm `{s}`")))
    }
}

/// Everything that determines a sweep's output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algos: Vec<Algo>,
    pub d: usize,
    pub n: usize,
    pub deltas: Vec<f64>,
    /// Budget in IFO epochs (`calls / n`).
    pub epochs: u32,
    pub seeds: Vec<u64>,
    /// Seeds the orthonormal factors shared by every cell.
    pub master_seed: u64,
    /// `None` uses each algorithm's own default.
    pub map_mode: Option<MapMode>,
    pub eta: Option<f64>,
    pub checkpoint_every: u32,
    pub tail: f64,
    pub out: Option<PathBuf>,
    pub workers: usize,
    pub convention: IfoConvention,
    /// Target accuracy for `spider`.
    pub eps: f64,
    /// Epochs per doubling window.
    pub window: u32,
    /// 1-based window whose medians feed the summary fit.
    pub fit_window: usize,
    pub wall_clock: bool,
    /// SVRG inner loop length; `None` means `n`.
    pub inner_len: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algos: vec![Algo::Rsvrg],
            d: 100,
            n: 2000,
            deltas: (1..=8).map(|k| 1e-2 / k as f64).collect(),
            epochs: 30,
            seeds: vec![1],
            master_seed: 0,
            map_mode: None,
            eta: None,
            checkpoint_every: 1,
            tail: 0.9,
            out: None,
            workers: 1,
            convention: IfoConvention::Paired,
            eps: 1e-3,
            window: 5,
            fit_window: 3,
            wall_clock: false,
            inner_len: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "" | "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        other => Err(Error::Usage(format!("invalid value `{other}` for `{key}`"))),
    }
}

/// Normalizes `checkpoint_every` and `--checkpoint-every` to one spelling.
pub fn canonical_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

impl ExperimentConfig {
    /// Applies one `key=value` setting. Keys use the flag spelling, with `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = canonical_key(key);
        let v = value.trim();
        match key.as_str() {
            "algo" | "algos" => self.algos = parse_list(&key, v)?,
            "d" => self.d = parse(&key, v)?,
            "n" => self.n = parse(&key, v)?,
            "delta" | "delta-list" | "deltas" => self.deltas = parse_list(&key, v)?,
            "epochs" => self.epochs = parse(&key, v)?,
            "seed" | "seeds" => self.seeds = parse_list(&key, v)?,
            "master-seed" => self.master_seed = parse(&key, v)?,
            "map-mode" => self.map_mode = Some(v.parse()?),
            "eta" => self.eta = Some(parse(&key, v)?),
            "checkpoint-every" => self.checkpoint_every = parse(&key, v)?,
            "tail" => self.tail = parse(&key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            "workers" => self.workers = parse(&key, v)?,
            "ifo-convention" => self.convention = v.parse()?,
            "eps" => self.eps = parse(&key, v)?,
            "window" => self.window = parse(&key, v)?,
            "fit-window" => self.fit_window = parse(&key, v)?,
            "wall-clock" => self.wall_clock = parse_bool(&key, v)?,
            "inner-len" => self.inner_len = Some(parse(&key, v)?),
            _ => return Err(Error::Usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat `key=value` text with `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("config line {}: expected key=value, got `{line}`", lineno + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Usage(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |m: String| Err(Error::Usage(m));
        if self.algos.is_empty() {
            return usage("no algorithm selected".into());
        }
        if self.d < 2 || self.n < self.d {
            return usage(format!("need 2 <= d <= n, got d = {}, n = {}", self.d, self.n));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return usage("every delta must lie in (0, 1)".into());
        }
        if self.seeds.is_empty() {
            return usage("no seeds given".into());
        }
        if self.checkpoint_every == 0 {
            return usage("checkpoint-every must be >= 1".into());
        }
        if self.window == 0 || !self.window.is_multiple_of(self.checkpoint_every) {
            return usage("window must be a positive multiple of checkpoint-every".into());
        }
        if !(self.tail > 0.0 && self.tail <= 1.0) {
            return usage(format!("tail must lie in (0, 1], got {}", self.tail));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return usage(format!("eta must be positive, got {eta}"));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return usage(format!("eps must be positive, got {}", self.eps));
        }
        if self.workers == 0 {
            return usage("workers must be >= 1".into());
        }
        if self.inner_len == Some(0) {
            return usage("inner-len must be >= 1".into());
        }
        if self.fit_window == 0 {
            return usage("fit-window must be >= 1".into());
        }
        Ok(())
    }

    /// Number of non-overlapping doubling windows in the budget.
    pub fn windows(&self) -> usize {
        (self.epochs / self.window) as usize
    }

    pub fn map_mode_for(&self, algo: Algo) -> MapMode {
        match algo {
            Algo::Vrpca => MapMode::Retraction,
            _ => self.map_mode.unwrap_or(algo.default_map_mode()),
        }
    }
}

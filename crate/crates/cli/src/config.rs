//! Run settings merged from flags (or `HFR_*` environment variables), an
//! optional `key = value` file, and defaults, in that order of precedence.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::UserError;

pub const KEYS: [&str; 14] = [
    "seed", "n", "out", "data", "width", "layers", "epochs", "lr", "decay", "dropout", "workers", "labels",
    "checkpoint", "split",
];

/// Parses a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, UserError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UserError(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().to_ascii_lowercase().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(UserError(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        map.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(map)
}

/// Fully resolved settings. Worker count is left out of the echo because
/// it never changes results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub n: usize,
    pub data: PathBuf,
    pub out: Option<PathBuf>,
    pub width: usize,
    pub layers: usize,
    pub epochs: usize,
    pub lr: f64,
    pub decay: f64,
    pub dropout: f64,
    pub split: String,
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    #[serde(skip)]
    pub workers: usize,
}

/// Command-line values; `None` when the flag and its variable are unset.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub width: Option<usize>,
    pub layers: Option<usize>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub decay: Option<f64>,
    pub dropout: Option<f64>,
    pub split: Option<String>,
    pub input: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn pick<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, UserError> {
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s.parse().map_err(|_| UserError(format!("config key `{key}`: cannot parse `{s}`"))),
        None => Ok(default),
    }
}

fn pick_opt<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, UserError> {
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|s| s.parse().map_err(|_| UserError(format!("config key `{key}`: cannot parse `{s}`"))))
        .transpose()
}

impl RunConfig {
    pub fn resolve(command: &str, o: Overrides, file: &BTreeMap<String, String>) -> Result<Self, UserError> {
        let default_data = match command {
            "train" | "eval" => "data/graphs",
            _ => "data",
        };
        let default_workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let rc = RunConfig {
            command: command.to_string(),
            seed: pick(o.seed, file, "seed", 0)?,
            n: pick(o.n, file, "n", 2000)?,
            data: pick(o.data, file, "data", PathBuf::from(default_data))?,
            out: pick_opt(o.out, file, "out")?,
            width: pick(o.width, file, "width", 128)?,
            layers: pick(o.layers, file, "layers", 7)?,
            epochs: pick(o.epochs, file, "epochs", 100)?,
            lr: pick(o.lr, file, "lr", 0.01)?,
            decay: pick(o.decay, file, "decay", 0.95)?,
            dropout: pick(o.dropout, file, "dropout", 0.3)?,
            split: pick(o.split, file, "split", "test".to_string())?,
            input: o.input,
            labels: pick_opt(o.labels, file, "labels")?,
            checkpoint: pick_opt(o.checkpoint, file, "checkpoint")?,
            workers: pick(o.workers, file, "workers", default_workers)?,
        };
        if rc.workers == 0 {
            return Err(UserError("workers must be at least 1".into()));
        }
        Ok(rc)
    }
}

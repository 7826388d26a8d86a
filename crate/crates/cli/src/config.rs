//! Effective experiment configuration: defaults, then a config file, then
//! command-line flags. Every key accepted by the file format is also a flag.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sjl_core::{BoundConstants, Flavor, SjlParams};

use crate::CliError;

pub const SEED_ENV: &str = "SJL_SEED";
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_COUNTS: &[usize] = &[1, 2, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub flavor: Flavor,
    pub eps: f64,
    pub delta: f64,
    /// Moment orders.
    pub q: Vec<u32>,
    pub trials: u64,
    pub seed: u64,
    /// Input vector: `e1`, `hard:<v>`, `flat:<count>`, `random:<seed>` or `values:<a>,<b>,...`.
    pub x: String,
    /// Levels for threshold sweeps; empty means `1/sqrt(N)` over the default counts.
    pub v_grid: Vec<f64>,
    /// Dimensions for sweeps; empty means just `m`.
    pub m_grid: Vec<usize>,
    /// Sparsities for threshold sweeps; empty means just `s`.
    pub s_grid: Vec<usize>,
    pub constants: BoundConstants,
    /// Enumeration budget of the exact oracle.
    pub budget: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 4,
            m: 8,
            s: 2,
            flavor: Flavor::Uniform,
            eps: 0.25,
            delta: 0.05,
            q: vec![2, 4],
            trials: DEFAULT_TRIALS,
            seed: 0,
            x: "hard:0.5".into(),
            v_grid: Vec::new(),
            m_grid: Vec::new(),
            s_grid: Vec::new(),
            constants: BoundConstants::default(),
            budget: sjl_core::oracle::EnumerationBudget::default().max_configs,
            format: None,
            out: None,
            matrix: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

/// Parses a seed in decimal or `0x` hexadecimal.
pub fn parse_seed(value: &str) -> Result<u64, CliError> {
    let v = value.trim();
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(&hex.replace('_', ""), 16).ok(),
        None => v.parse().ok(),
    };
    parsed.ok_or_else(|| CliError::Config(format!("seed: cannot parse '{value}'")))
}

impl ExperimentConfig {
    /// Defaults with the seed taken from `SJL_SEED` when set.
    pub fn from_env() -> Result<Self, CliError> {
        let mut cfg = ExperimentConfig::default();
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.seed = parse_seed(&seed)
                .map_err(|e| CliError::Config(format!("{SEED_ENV}: {e}")))?;
        }
        Ok(cfg)
    }

    /// Sets one key. Keys match the flag names; `-` and `_` are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "n" => self.n = parse(&key, value)?,
            "m" => self.m = parse(&key, value)?,
            "s" => self.s = parse(&key, value)?,
            "flavor" => self.flavor = value.trim().parse().map_err(CliError::from)?,
            "eps" => self.eps = parse(&key, value)?,
            "delta" => self.delta = parse(&key, value)?,
            "q" => self.q = parse_list(&key, value)?,
            "trials" => self.trials = parse(&key, value)?,
            "seed" => self.seed = parse_seed(value)?,
            "x" => self.x = value.trim().to_string(),
            "v_grid" => self.v_grid = parse_list(&key, value)?,
            "m_grid" => self.m_grid = parse_list(&key, value)?,
            "s_grid" => self.s_grid = parse_list(&key, value)?,
            "constants" => self.constants.apply_overrides(value).map_err(CliError::from)?,
            "budget" => self.budget = parse(&key, value)?,
            "format" => self.format = Some(value.parse()?),
            "out" => self.out = Some(PathBuf::from(value.trim())),
            "matrix" => self.matrix = Some(PathBuf::from(value.trim())),
            // written by this tool alongside the config; ignored on input
            "command" | "version" => {}
            other => return Err(CliError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies a config file: either `key = value` lines (`#` starts a
    /// comment) or a JSON object, optionally nested under a `config` key as
    /// in this tool's JSON outputs.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        if text.trim_start().starts_with('{') {
            let root: Value = serde_json::from_str(text)
                .map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?;
            let obj = match root.get("config") {
                Some(inner) => inner,
                None => &root,
            };
            let obj = obj
                .as_object()
                .ok_or_else(|| CliError::Config("JSON config must be an object".into()))?;
            for (key, value) in obj {
                if let Some(v) = json_to_setting(value) {
                    self.set(key, &v)?;
                }
            }
            return Ok(());
        }
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("config line {}: expected key = value", lineno + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SjlParams, CliError> {
        Ok(SjlParams::new(self.n, self.m, self.s, self.flavor)?)
    }

    pub fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    pub fn m_values(&self) -> Vec<usize> {
        if self.m_grid.is_empty() {
            vec![self.m]
        } else {
            self.m_grid.clone()
        }
    }

    pub fn s_values(&self) -> Vec<usize> {
        if self.s_grid.is_empty() {
            vec![self.s]
        } else {
            self.s_grid.clone()
        }
    }

    pub fn v_values(&self) -> Vec<f64> {
        if self.v_grid.is_empty() {
            DEFAULT_COUNTS.iter().map(|&c| 1.0 / (c as f64).sqrt()).collect()
        } else {
            self.v_grid.clone()
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Flattens a JSON value to the string form `set` accepts; `None` for null.
fn json_to_setting(value: &Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => Some(
            items
                .iter()
                .filter_map(json_to_setting)
                .collect::<Vec<_>>()
                .join(","),
        ),
        Value::Object(map) => Some(
            map.iter()
                .filter_map(|(k, v)| json_to_setting(v).map(|v| format!("{k}={v}")))
                .collect::<Vec<_>>()
                .join(","),
        ),
    }
}

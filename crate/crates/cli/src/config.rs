//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

/// The five subcommands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    FitMixture,
    FitFactors,
    FitVi,
    Diagnose,
}

const BASE_KEYS: &[&str] = &["prior_mean", "prior_var", "obs_var"];
const FACTOR_PRIOR_KEYS: &[&str] = &["weight_var", "activation_var", "noise_shape", "noise_scale"];
const GRID_KEYS: &[&str] = &["grid_points", "grid_lo", "grid_hi"];

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::FitMixture => "fit-mixture",
            CommandKind::FitFactors => "fit-factors",
            CommandKind::FitVi => "fit-vi",
            CommandKind::Diagnose => "diagnose",
        }
    }

    /// Keys this command accepts. Anything else is rejected by name.
    pub fn allowed_keys(self) -> Vec<&'static str> {
        let mut keys = vec!["seed", "out"];
        match self {
            CommandKind::Simulate => {
                keys.extend([
                    "model",
                    "chains",
                    "n",
                    "dim",
                    "alpha",
                    "components",
                    "centers",
                    "m",
                    "observations",
                    "k_true",
                    "loading",
                    "loading_prob",
                    "weight_var",
                    "activation_var",
                    "noise_var",
                    "dish_rate",
                ]);
                keys.extend(BASE_KEYS);
            }
            CommandKind::FitMixture => {
                keys.extend([
                    "input",
                    "chains",
                    "alpha",
                    "alpha_shape",
                    "alpha_rate",
                    "sweeps",
                    "burnin",
                    "thin",
                    "scan",
                    "coclustering",
                ]);
                keys.extend(BASE_KEYS);
                keys.extend(GRID_KEYS);
            }
            CommandKind::FitFactors => {
                keys.extend(["input", "chains", "alpha", "sweeps", "burnin", "thin"]);
                keys.extend(FACTOR_PRIOR_KEYS);
            }
            CommandKind::FitVi => {
                keys.extend([
                    "input",
                    "alpha",
                    "truncation",
                    "iterations",
                    "tolerance",
                    "restarts",
                ]);
                keys.extend(BASE_KEYS);
                keys.extend(GRID_KEYS);
            }
            CommandKind::Diagnose => {
                keys.extend([
                    "trace",
                    "geweke",
                    "model",
                    "sweeps",
                    "n",
                    "m",
                    "observations",
                    "kernel",
                    "alpha",
                ]);
                keys.extend(BASE_KEYS);
                keys.extend(FACTOR_PRIOR_KEYS);
            }
        }
        keys
    }
}

/// Validated set of settings for one command.
#[derive(Clone, Debug)]
pub struct RunConfig {
    command: CommandKind,
    values: BTreeMap<String, String>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                i + 1
            )));
        };
        let key = normalize_key(key);
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: missing key", i + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

/// Parse `--key value` / `--key=value` pairs.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(CliError::Config(format!(
                "expected `--key value`, got `{arg}`"
            )));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let Some(v) = iter.next() else {
                    return Err(CliError::Config(format!("key `{flag}` has no value")));
                };
                (flag.to_string(), v.clone())
            }
        };
        out.push((normalize_key(&key), value));
    }
    Ok(out)
}

impl RunConfig {
    /// Merge the optional config file with overrides (overrides win) and
    /// reject unknown keys.
    pub fn load(command: CommandKind, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut pairs = Vec::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            pairs.extend(parse_config_text(&text)?);
        }
        pairs.extend(parse_overrides(overrides)?);
        Self::from_pairs(command, pairs)
    }

    pub fn from_pairs(command: CommandKind, pairs: Vec<(String, String)>) -> Result<Self> {
        let allowed = command.allowed_keys();
        let mut values = BTreeMap::new();
        for (key, value) in pairs {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown key `{key}` for {}",
                    command.name()
                )));
            }
            values.insert(key, value);
        }
        Ok(Self { command, values })
    }

    pub fn command(&self) -> CommandKind {
        self.command
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Config(format!("key `{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.parse::<f64>(key)? {
            Some(v) if !v.is_finite() => {
                Err(CliError::Config(format!("key `{key}` must be finite")))
            }
            other => Ok(other),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }

    /// Positive real, defaulting when absent.
    pub fn positive_f64_or(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(CliError::Config(format!(
                "key `{key}` must be positive, got {v}"
            )))
        }
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse::<usize>(key)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.opt_usize(key)?.unwrap_or(default))
    }

    pub fn required_usize(&self, key: &str) -> Result<usize> {
        self.opt_usize(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Config(format!(
                "key `{key}`: expected true or false, got `{v}`"
            ))),
        }
    }

    /// The mandatory seed; there is no clock-based default.
    pub fn seed(&self) -> Result<u64> {
        self.parse::<u64>("seed")?
            .ok_or_else(|| CliError::Config("missing required key `seed`".into()))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = PathBuf::from(self.get("out").unwrap_or("out"));
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    pub fn required_path(&self, key: &str) -> Result<PathBuf> {
        self.get(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// One of `choices`, or `default` when absent.
    pub fn choice<'a>(&self, key: &str, choices: &[&'a str], default: &'a str) -> Result<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => choices.iter().find(|c| **c == v).copied().ok_or_else(|| {
                CliError::Config(format!(
                    "key `{key}`: `{v}` is not one of {}",
                    choices.join(", ")
                ))
            }),
        }
    }

    /// `chains >= 1`, default 1.
    pub fn chains(&self) -> Result<usize> {
        let chains = self.usize_or("chains", 1)?;
        if chains == 0 {
            return Err(CliError::Config("key `chains` must be at least 1".into()));
        }
        Ok(chains)
    }

    /// `(sweeps, burnin, thin)` with `burnin < sweeps` and `thin >= 1`.
    pub fn schedule(&self, sweeps: usize, burnin: usize) -> Result<(usize, usize, usize)> {
        let sweeps = self.usize_or("sweeps", sweeps)?;
        let burnin = self.usize_or("burnin", burnin)?;
        let thin = self.usize_or("thin", 1)?;
        if sweeps == 0 {
            return Err(CliError::Config("key `sweeps` must be at least 1".into()));
        }
        if burnin >= sweeps {
            return Err(CliError::Config(format!(
                "key `burnin` ({burnin}) must be smaller than `sweeps` ({sweeps})"
            )));
        }
        if thin == 0 {
            return Err(CliError::Config("key `thin` must be at least 1".into()));
        }
        Ok((sweeps, burnin, thin))
    }
}

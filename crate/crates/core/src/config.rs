//! Run configuration: defaults, then a TOML file, then `QNAR_*` environment
//! variables, then command-line flags. Values are kept as canonical strings
//! and parsed on use so every source goes through the same validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown config key {key:?} (from {origin})")]
    UnknownKey { key: String, origin: Source },
    #[error("{key} = {value:?}: {message}")]
    InvalidValue { key: String, value: String, message: String },
    #[error("config file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Source {
    Default,
    File,
    Env,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Env => "env",
            Source::Flag => "flag",
        })
    }
}

pub const ENV_PREFIX: &str = "QNAR_";

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("epoch.origin", "auto"),
    ("epoch.period", "604800"),
    ("epoch.count", "auto"),
    ("epoch.webbing", "false"),
    ("score.alpha", "0.15"),
    ("score.tol", "1e-10"),
    ("score.max_iter", "10000"),
    ("score.decay", "1"),
    ("score.base", "1000"),
    ("score.mint_mode", "cumulative"),
    ("score.anchors", "user,courselet"),
    ("payout.strategy", "balanced"),
    ("payout.budget", "100"),
    ("payout.decay", "0.5"),
    ("payout.rate", "1/1"),
    ("sim.n", "5"),
    ("sim.rounds", "10"),
    ("sim.reps", "100"),
    ("sim.seed", "0"),
    ("sim.dist", "uniform"),
    ("sim.f", "0.1"),
    ("sim.p", "0.5"),
    ("sim.inflation", "1"),
    ("sim.inflation_mode", "per-participant"),
    ("sim.outcome", "endogenous"),
    ("sim.p_accept", "0.5"),
    ("sim.paths", "false"),
    ("threads", "0"),
];

fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, (String, Source)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|(k, v)| (*k, (v.to_string(), Source::Default))).collect() }
    }
}

impl RunConfig {
    fn slot(key: &str, source: Source) -> Result<&'static str, ConfigError> {
        KEYS.iter()
            .map(|(k, _)| *k)
            .find(|k| *k == key)
            .ok_or_else(|| ConfigError::UnknownKey { key: key.to_string(), origin: source })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>, source: Source) -> Result<(), ConfigError> {
        let key = Self::slot(key, source)?;
        self.values.insert(key, (value.into(), source));
        Ok(())
    }

    /// Merges a TOML document; tables nest with `.` (`[sim] n = 5` is `sim.n`).
    pub fn merge_toml(&mut self, text: &str) -> Result<(), ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::File(e.to_string()))?;
        let mut flat = Vec::new();
        flatten("", &toml::Value::Table(table), &mut flat)?;
        for (key, value) in flat {
            self.set(&key, value, Source::File)?;
        }
        Ok(())
    }

    /// Applies `QNAR_*` variables; any other variable with the prefix is an error.
    pub fn merge_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let names: BTreeMap<String, &'static str> = KEYS.iter().map(|(k, _)| (env_name(k), *k)).collect();
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(n, _)| n.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (name, value) in vars {
            let key = names.get(&name).ok_or(ConfigError::UnknownKey { key: name.clone(), origin: Source::Env })?;
            self.set(key, value, Source::Env)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        &self.values.get(key).unwrap_or_else(|| panic!("{key} is not a config key")).0
    }

    pub fn source(&self, key: &str) -> Source {
        self.values[key].1
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key);
        raw.trim().parse().map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.to_string(),
            value: raw.to_string(),
            message: e.to_string(),
        })
    }

    /// `None` for the literal `auto`.
    pub fn get_auto<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        if self.raw(key).trim() == "auto" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: raw.to_string(),
                    message: e.to_string(),
                })
            })
            .collect()
    }

    pub fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue { key: key.to_string(), value: self.raw(key).to_string(), message: message.into() }
    }

    /// `key = value  # source`, one per line, keys sorted.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, (v, s))| format!("{k} = {v}  # {s}\n")).collect()
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) -> Result<(), ConfigError> {
    let scalar = |v: &toml::Value| -> Result<String, ConfigError> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => return Err(ConfigError::File(format!("{prefix}: unsupported value {other}"))),
        })
    };
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out)?;
            }
        }
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
            out.push((prefix.to_string(), parts.join(",")));
        }
        other => out.push((prefix.to_string(), scalar(other)?)),
    }
    Ok(())
}

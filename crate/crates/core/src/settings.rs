//! Flat run configuration shared by every subcommand.
//!
//! A config file is a flat TOML table whose keys are the field names of
//! [`EnvConfig`], [`TrainConfig`] and [`BenchConfig`]. Every key is optional.
//! `key=value` overrides are applied on top, so the precedence is
//! overrides > file > defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::bench::BenchConfig;
use crate::config::EnvConfig;
use crate::error::{ConfigError, Error, Result};
use crate::ppo::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    match Value::try_from(value) {
        Ok(Value::Table(t)) => t.keys().cloned().collect(),
        _ => unreachable!("config structs serialize to tables"),
    }
}

fn section<T: DeserializeOwned>(table: Table) -> Result<T, ConfigError> {
    Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))
}

/// Parses the right-hand side of an override. Anything that is not a TOML
/// value is taken as a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::MalformedOverride(s.to_string()))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::MalformedOverride(s.to_string()));
    }
    Ok((k.to_string(), parse_value(v.trim())))
}

impl RunConfig {
    /// Every key a config file may set.
    pub fn known_keys() -> BTreeSet<String> {
        let d = RunConfig::default();
        let mut all = keys_of(&d.env);
        all.extend(keys_of(&d.train));
        all.extend(keys_of(&d.bench));
        all
    }

    /// Builds a config from a flat table; unknown keys are errors.
    pub fn from_table(table: Table) -> Result<Self, ConfigError> {
        let d = RunConfig::default();
        let (env_keys, train_keys, bench_keys) = (keys_of(&d.env), keys_of(&d.train), keys_of(&d.bench));
        let (mut env, mut train, mut bench) = (Table::new(), Table::new(), Table::new());
        for (k, v) in table {
            let target = if env_keys.contains(&k) {
                &mut env
            } else if train_keys.contains(&k) {
                &mut train
            } else if bench_keys.contains(&k) {
                &mut bench
            } else {
                return Err(ConfigError::UnknownKey(k));
            };
            target.insert(k, v);
        }
        let cfg = RunConfig {
            env: section(env)?,
            train: section(train)?,
            bench: section(bench)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate()?;
        self.train.validate()?;
        self.bench.validate()
    }

    /// Loads an optional file and applies `key=value` overrides.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str::<Table>(&text)
                    .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            let (k, v) = parse_override(o)?;
            table.insert(k, v);
        }
        Ok(RunConfig::from_table(table)?)
    }

    /// The fully resolved config as a flat table.
    pub fn to_table(&self) -> Table {
        let mut out = Table::new();
        for v in [
            Value::try_from(&self.env),
            Value::try_from(&self.train),
            Value::try_from(&self.bench),
        ] {
            if let Ok(Value::Table(t)) = v {
                out.extend(t);
            }
        }
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("flat table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_have_disjoint_keys() {
        let d = RunConfig::default();
        let (a, b, c) = (keys_of(&d.env), keys_of(&d.train), keys_of(&d.bench));
        assert_eq!(RunConfig::known_keys().len(), a.len() + b.len() + c.len());
        assert!(a.contains("belt_capacity") && b.contains("learning_rate") && c.contains("eval_seeds"));
    }

    #[test]
    fn empty_table_gives_defaults() {
        assert_eq!(RunConfig::from_table(Table::new()).unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = RunConfig::resolve(None, &["belt_speed=3".into()]).unwrap_err();
        assert!(matches!(err, Error::Config(ConfigError::UnknownKey(ref k)) if k == "belt_speed"), "{err}");
    }

    #[test]
    fn overrides_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\nbale_size = 12.0\neval_seeds = [1, 2]\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &["seed=9".into(), "masked=true".into()]).unwrap();
        assert_eq!(cfg.train.seed, 9);
        assert!(cfg.train.masked);
        assert_eq!(cfg.env.bale_size, 12.0);
        assert_eq!(cfg.bench.eval_seeds, vec![1, 2]);
    }

    #[test]
    fn override_value_forms() {
        assert_eq!(parse_override("a=1").unwrap().1, Value::Integer(1));
        assert_eq!(parse_override("a = 0.5").unwrap().1, Value::Float(0.5));
        assert_eq!(parse_override("a=rule").unwrap().1, Value::String("rule".into()));
        assert!(matches!(parse_override("a=[1,2]").unwrap().1, Value::Array(_)));
        assert!(parse_override("novalue").is_err());
        assert!(parse_override("=3").is_err());
    }

    #[test]
    fn integer_literal_accepted_for_float_field() {
        let cfg = RunConfig::resolve(None, &["belt_capacity=40".into()]).unwrap();
        assert_eq!(cfg.env.belt_capacity, 40.0);
    }

    #[test]
    fn bound_violation_names_field() {
        let err = RunConfig::resolve(None, &["bale_size=0".into()]).unwrap_err();
        assert!(err.to_string().contains("bale_size"), "{err}");
    }

    #[test]
    fn printed_config_resolves_back() {
        let mut cfg = RunConfig::default();
        cfg.train.total_timesteps = 4096;
        cfg.env.purity_thresholds[2] = 0.9;
        let table: Table = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(RunConfig::from_table(table).unwrap(), cfg);
    }
}

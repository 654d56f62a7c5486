//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! [netsim]
//! n_nodes = 1000
//! mean_delay_out = 2.5
//! ```
//!
//! Keys are addressed as `section.key`; keys before the first header live in
//! the unnamed section and are addressed by bare name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ini::{Ini, ParseOption};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// `line` is 1-based; 0 when the problem is not tied to one line.
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{key}: cannot parse {value:?}: {message}")]
    Value { key: String, value: String, message: String },
    #[error("unknown configuration key {0}")]
    UnknownKey(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let opt = ParseOption { enabled_quote: false, enabled_escape: false, ..ParseOption::default() };
        let ini = Ini::load_from_str_opt(text, opt)
            .map_err(|e| ConfigError::Syntax { line: e.line, message: e.msg.into_owned() })?;
        let mut entries = BTreeMap::new();
        for (section, props) in ini.iter() {
            let prefix = match section {
                Some(name) if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                    return Err(ConfigError::Syntax { line: 0, message: format!("bad section name {name:?}") });
                }
                Some(name) => format!("{name}."),
                None => String::new(),
            };
            for (key, value) in props.iter() {
                entries.insert(format!("{prefix}{}", key.trim()), value.trim().to_string());
            }
        }
        Ok(Config { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies a `section.key=value` override.
    pub fn set_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("override {assignment:?} is not key=value")))?;
        self.entries.insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Overwrites `target` with the parsed value of `key` when present.
    pub fn read_into<T>(&self, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(value) = self.raw(key) {
            *target = value.parse::<T>().map_err(|e| ConfigError::Value {
                key: key.to_string(),
                value: value.to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Comma-separated list value.
    pub fn read_list_into<T>(&self, key: &str, target: &mut Vec<T>) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(value) = self.raw(key) {
            *target = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<T>().map_err(|e| ConfigError::Value {
                        key: key.to_string(),
                        value: value.to_string(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }

    /// Fails on any key outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.to_string())),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let mut cfg = Config::parse("top = 1\n[netsim]\n# c\nn_nodes = 50 # trailing\n\n[eval]\ncoverages = 0.25, 1.0\n").unwrap();
        let mut n = 0usize;
        cfg.read_into("netsim.n_nodes", &mut n).unwrap();
        assert_eq!(n, 50);
        let mut top = 0u8;
        cfg.read_into("top", &mut top).unwrap();
        assert_eq!(top, 1);
        let mut covs: Vec<f64> = vec![];
        cfg.read_list_into("eval.coverages", &mut covs).unwrap();
        assert_eq!(covs, vec![0.25, 1.0]);
        cfg.set_override("netsim.n_nodes=7").unwrap();
        cfg.read_into("netsim.n_nodes", &mut n).unwrap();
        assert_eq!(n, 7);
        let mut untouched = 3u32;
        cfg.read_into("netsim.missing", &mut untouched).unwrap();
        assert_eq!(untouched, 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(Config::parse("[bad"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("x\n"), Err(ConfigError::Syntax { .. })));
        let cfg = Config::parse("a = x").unwrap();
        let mut v = 0u32;
        assert!(matches!(cfg.read_into("a", &mut v), Err(ConfigError::Value { .. })));
        assert!(matches!(cfg.check_known(&["b"]), Err(ConfigError::UnknownKey(_))));
    }
}

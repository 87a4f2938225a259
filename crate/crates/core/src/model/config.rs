//! Flat `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, lists are comma-separated.
//! Model keys are unprefixed; training and baseline settings use the
//! `train.`, `rf.` and `gbm.` prefixes.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<(String, String)>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: i + 1,
                message: format!("expected `key = value`, got {raw:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Parse { row: i + 1, message: "empty key".into() });
            }
            if cfg.get(k).is_some() {
                return Err(Error::Parse { row: i + 1, message: format!("duplicate key {k:?}") });
            }
            cfg.entries.push((k.to_string(), v.to_string()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KvConfig::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_list<V: ToString>(&mut self, key: &str, values: &[V]) {
        let joined = values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        self.set(key, joined);
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    /// Parse `key` if present.
    pub fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}"))),
        }
    }

    pub fn parsed_or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn list<V: FromStr>(&self, key: &str) -> Result<Option<Vec<V>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("invalid list item {item:?} for {key}")))
                })
                .collect::<Result<Vec<V>>>()
                .map(Some),
        }
    }

    /// Keys not in `known` and not under one of `prefixes`.
    pub fn unknown_keys<'a>(&'a self, known: &[&str], prefixes: &[&str]) -> Vec<&'a str> {
        self.keys()
            .filter(|k| !known.contains(k) && !prefixes.iter().any(|p| k.starts_with(p)))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

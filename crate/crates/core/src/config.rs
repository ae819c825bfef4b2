//! Flat `key = value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Lists are comma-separated. Every section of the laboratory (environment,
//! prompts, GAE, training, search) reads its keys from the same file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", idx + 1)));
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{key}`",
                    idx + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`"))),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.entries.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{item}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Rejects keys outside `known`.
    pub fn check_known(&self, known: &BTreeSet<&str>) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    /// Canonical rendering: sorted keys, one `key = value` per line.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

pub(crate) fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must lie in [0, 1], got {p}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KvConfig::parse("# header\nT = 64\nweights = 1, 2,3 # trailing\n\n").unwrap();
        assert_eq!(kv.get("T", 0usize).unwrap(), 64);
        assert_eq!(kv.get_list::<f64>("weights").unwrap().unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(kv.get("missing", 5u32).unwrap(), 5);
    }

    #[test]
    fn rejects_garbage() {
        assert!(KvConfig::parse("no equals sign").is_err());
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
        let kv = KvConfig::parse("a = x").unwrap();
        assert!(kv.get("a", 0usize).is_err());
    }

    #[test]
    fn render_is_canonical() {
        let a = KvConfig::parse("b = 2\na = 1").unwrap();
        let b = KvConfig::parse("a=1\n\nb=2").unwrap();
        assert_eq!(a.render(), b.render());
        assert_eq!(a.digest(), b.digest());
    }
}

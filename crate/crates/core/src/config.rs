// SPDX-License-Identifier: Apache-2.0

//! Plain-text `key = value` configuration files.
//!
//! One pair per line; `#` starts a comment; blank lines are ignored. Keys are
//! case-sensitive and must be unique within a file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("expected `key = value`, got {line:?}"),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config {
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if entries
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config {
                    line: idx + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parses the value of `key` if present.
    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::Invalid(format!("config key `{key}`: cannot parse {v:?}"))
            }),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_comments() {
        let cfg = KvConfig::parse("# header\n a = 1 \nb=two # trailing\n\n").unwrap();
        assert_eq!(cfg.get("a"), Some("1"));
        assert_eq!(cfg.get("b"), Some("two"));
        assert_eq!(cfg.get_parsed::<u32>("a").unwrap(), Some(1));
        assert!(cfg.get_parsed::<u32>("b").is_err());
        assert_eq!(cfg.get_parsed::<u32>("c").unwrap(), None);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KvConfig::parse("a = 1\na = 2"),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(KvConfig::parse("just words").is_err());
        assert!(KvConfig::parse("= 3").is_err());
    }
}

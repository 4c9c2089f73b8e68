//! Flat `key = value` configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment                  (also after a value: `n = 500  # rows`)
//! key = value
//! [section]                  (prefixes later keys with `section.`)
//! section.key = value        (same as the two lines above)
//! []                         (back to the top level)
//! ```
//!
//! Keys are `[A-Za-z0-9_.]+`; values are trimmed strings. Lists are
//! comma-separated. Repeating a key is an error.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty()
        && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !k.starts_with('.')
        && !k.ends_with('.')
        && !k.contains("..")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| HarnessError::Config(format!("line {}: {msg}: `{}`", no + 1, raw.trim()));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| bad("unterminated section"))?.trim();
                if !name.is_empty() && !valid_key(name) {
                    return Err(bad("bad section name"));
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let k = k.trim();
            if !valid_key(k) {
                return Err(bad("bad key"));
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(bad(&format!("duplicate key {key}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
        Self::parse(&text)
    }

    #[must_use]
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Keys under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> BTreeMap<String, String> {
        let p = format!("{prefix}.");
        self.entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| HarnessError::Config(format!("cannot parse `{key} = {v}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| HarnessError::Config(format!("missing key `{key}`")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) if v.is_empty() => Ok(Some(vec![])),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| HarnessError::Config(format!("cannot parse list item `{}` in `{key}`", s.trim())))
                })
                .collect::<Result<_>>()
                .map(Some),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            None => Ok(false),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some("false" | "no" | "0" | "off") => Ok(false),
            Some(v) => Err(HarnessError::Config(format!("`{key} = {v}` is not a boolean"))),
        }
    }
}

impl std::fmt::Display for Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let c = Config::parse("a = 1\n# skip\n[penalty]\nkind = scad # trailing\na = 3.7\n[]\nb = x, y\n").unwrap();
        assert_eq!(c.raw("a"), Some("1"));
        assert_eq!(c.raw("penalty.kind"), Some("scad"));
        assert_eq!(c.get::<f64>("penalty.a").unwrap(), Some(3.7));
        assert_eq!(c.list::<String>("b").unwrap().unwrap(), vec!["x", "y"]);
        assert_eq!(c.section("penalty").len(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Config::parse("a 1").is_err());
        assert!(Config::parse("a = 1\na = 2").is_err());
        assert!(Config::parse("[x\n").is_err());
        assert!(Config::parse("a..b = 1").is_err());
        assert!(Config::parse("n = x").unwrap().get::<usize>("n").is_err());
    }
}

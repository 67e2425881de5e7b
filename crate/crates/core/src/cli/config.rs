//! Run configuration: a sectioned `key = value` text format.
//!
//! ```text
//! # comment
//! [problem]
//! n = 2
//! res = 16, 32
//! [schedule]
//! eps = 1e-1, 1e-2
//! ```
//!
//! Section and key names are `[a-z0-9_]+`. Values run to the end of the line
//! (an unquoted `#` starts a comment) and lists are comma separated. A key
//! may appear once per section. Keys that no subcommand reads are errors.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Field { section: String, key: String, msg: String },
}

impl ConfigError {
    pub fn field(section: &str, key: &str, msg: impl Into<String>) -> Self {
        ConfigError::Field { section: section.into(), key: key.into(), msg: msg.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry<'a> {
    line: usize,
    value: &'a str,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Parsed configuration. Reading a key through the typed getters records
/// the value actually used, defaults included; [`Config::resolved`] returns
/// that record.
#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, BTreeMap<String, (usize, String)>>,
    resolved: RefCell<BTreeMap<String, BTreeMap<String, String>>>,
    read: RefCell<BTreeSet<(String, String)>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut section: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, msg: "unterminated section header".into() })?
                    .trim();
                if !valid_name(name) {
                    return Err(ConfigError::Syntax { line, msg: format!("invalid section name '{name}'") });
                }
                cfg.entries.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, msg: format!("expected key = value, found '{body}'") })?;
            let (key, value) = (key.trim(), value.trim());
            if !valid_name(key) {
                return Err(ConfigError::Syntax { line, msg: format!("invalid key '{key}'") });
            }
            if value.is_empty() {
                return Err(ConfigError::Syntax { line, msg: format!("empty value for '{key}'") });
            }
            let sec = section
                .as_ref()
                .ok_or_else(|| ConfigError::Syntax { line, msg: "key outside of any section".into() })?;
            let slot = cfg.entries.get_mut(sec).expect("section registered");
            if let Some((first, _)) = slot.get(key) {
                return Err(ConfigError::Syntax { line, msg: format!("'{key}' already set on line {first}") });
            }
            slot.insert(key.to_string(), (line, value.to_string()));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Syntax { line: 0, msg: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    fn entry(&self, section: &str, key: &str) -> Option<Entry<'_>> {
        self.read.borrow_mut().insert((section.to_string(), key.to_string()));
        self.entries.get(section)?.get(key).map(|(line, v)| Entry { line: *line, value: v })
    }

    /// Replaces the recorded value, for settings overridden on the command line.
    pub fn record(&self, section: &str, key: &str, value: String) {
        self.resolved.borrow_mut().entry(section.to_string()).or_default().insert(key.to_string(), value);
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.entries.get(section).is_some_and(|s| s.contains_key(key))
    }

    pub fn str_or(&self, section: &str, key: &str, default: &str) -> String {
        let v = self.entry(section, key).map(|e| e.value.to_string()).unwrap_or_else(|| default.to_string());
        self.record(section, key, v.clone());
        v
    }

    pub fn get_or<T: FromStr + Display>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: Display,
    {
        let v = match self.entry(section, key) {
            Some(e) => e
                .value
                .parse::<T>()
                .map_err(|err| ConfigError::field(section, key, format!("line {}: {err}", e.line)))?,
            None => default,
        };
        self.record(section, key, v.to_string());
        Ok(v)
    }

    pub fn list_or<T: FromStr + Display + Clone>(
        &self,
        section: &str,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>, ConfigError>
    where
        T::Err: Display,
    {
        let v = match self.entry(section, key) {
            Some(e) => e
                .value
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<T>()
                        .map_err(|err| ConfigError::field(section, key, format!("line {}: '{}': {err}", e.line, s.trim())))
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => default.to_vec(),
        };
        self.record(section, key, v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        Ok(v)
    }

    /// Fails on keys that were present but never read.
    pub fn check_unused(&self) -> Result<(), ConfigError> {
        let read = self.read.borrow();
        for (sec, keys) in &self.entries {
            for (key, (line, _)) in keys {
                if !read.contains(&(sec.clone(), key.clone())) {
                    return Err(ConfigError::Syntax { line: *line, msg: format!("unknown key '{key}' in [{sec}]") });
                }
            }
        }
        Ok(())
    }

    pub fn resolved(&self) -> BTreeMap<String, BTreeMap<String, String>> {
        self.resolved.borrow().clone()
    }
}

/// `name` or `name:a,b,...` with numeric parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedSpec {
    pub name: String,
    pub params: Vec<f64>,
}

impl NamedSpec {
    pub fn parse(section: &str, key: &str, s: &str) -> Result<Self, ConfigError> {
        let (name, rest) = match s.split_once(':') {
            Some((a, b)) => (a.trim(), Some(b)),
            None => (s.trim(), None),
        };
        if !valid_name(name) {
            return Err(ConfigError::field(section, key, format!("invalid name '{name}'")));
        }
        let params = match rest {
            Some(r) => r
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|e| ConfigError::field(section, key, format!("parameter '{}': {e}", p.trim())))
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(NamedSpec { name: name.into(), params })
    }

    /// The parameters, which must number exactly `count`.
    pub fn expect(&self, section: &str, key: &str, count: usize) -> Result<&[f64], ConfigError> {
        if self.params.len() != count {
            return Err(ConfigError::field(
                section,
                key,
                format!("'{}' takes {count} parameter(s), got {}", self.name, self.params.len()),
            ));
        }
        Ok(&self.params)
    }
}

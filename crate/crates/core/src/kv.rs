//! Flat `key = value` text used for sidecars, reports, checkpoint headers and
//! run configuration. One pair per line, `#` starts a comment, keys are unique.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut doc = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(KvError::Syntax { line: i + 1 })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1 });
            }
            if doc.get(key).is_some() {
                return Err(KvError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
            doc.entries.push((key.to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    /// Replaces an existing value in place or appends.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, KvError> {
        self.get(key).ok_or_else(|| KvError::Missing(key.to_string()))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T, KvError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| KvError::BadValue {
            key: key.to_string(),
            value: v.to_string(),
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Comma-joined list.
pub fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

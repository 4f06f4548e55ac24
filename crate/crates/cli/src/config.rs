//! Flat `key = value` run configuration. Command-line flags take precedence.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: HashMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

impl RunConfig {
    /// Lines of `key = value`; blank lines and `#` comments are skipped.
    /// Keys are matched with dashes and underscores treated alike.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::invalid(format!("config line {}: expected key = value", i + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(CliError::invalid(format!("config line {}: empty key", i + 1)));
            }
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::invalid(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn pick<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(&normalize(key)) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::invalid(format!("config key '{key}' = '{v}': {e}"))),
        }
    }

    pub fn pick_or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(key, flag)?.unwrap_or(default))
    }
}

/// Comma-separated list, e.g. `50,100,200`.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<usize>);

impl FromStr for List {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(List)
    }
}

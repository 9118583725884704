//! Option values merged from a key=value config file and command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::Failure;

#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
    pub fn parse_config(text: &str, origin: &str) -> Result<Self, Failure> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Failure::Input(format!("{origin}: line {}: expected key = value", i + 1)))?;
            let key = key.trim().trim_start_matches("--");
            if key.is_empty() {
                return Err(Failure::Input(format!("{origin}: line {}: empty key", i + 1)));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Settings { values })
    }

    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        Self::parse_config(&text, &path.display().to_string())
    }

    /// Flag values override config values.
    pub fn set(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), v);
        }
    }

    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), Failure> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Failure::Usage(format!("unknown option '{k}' for this command"))),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Failure::Usage(format!("invalid value '{v}' for --{key}: {e}")))
            })
            .transpose()
    }
}

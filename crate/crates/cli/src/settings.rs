use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Values from the config file for one subcommand, plus a record of every
/// resolved setting for the manifest.
#[derive(Debug, Default)]
pub struct Settings {
    shared: toml::Table,
    section: toml::Table,
    pub resolved: serde_json::Map<String, serde_json::Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>, section: &str) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let mut shared: toml::Table =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let section = match shared.remove(section) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(CliError::Usage(format!("`{section}` in the config file must be a table"))),
            None => toml::Table::new(),
        };
        Ok(Self {
            shared,
            section,
            resolved: Default::default(),
        })
    }

    fn file_value<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        let Some(v) = self.section.get(key).or_else(|| self.shared.get(key)) else {
            return Ok(None);
        };
        v.clone()
            .try_into()
            .map(Some)
            .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
    }

    /// Flag, else config file, else `default`.
    pub fn pick<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Like [`pick`](Self::pick) without a default.
    pub fn maybe<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn require<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> Result<T> {
        self.maybe(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("--{key} is required")))
    }

    /// Repeatable flags replace the file's list when given.
    pub fn list(&mut self, key: &str, flag: Vec<String>) -> Result<Vec<String>> {
        let v = if flag.is_empty() {
            match self.file_value::<toml::Value>(key)? {
                None => Vec::new(),
                Some(toml::Value::String(s)) => vec![s],
                Some(other) => other
                    .try_into()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))?,
            }
        } else {
            flag
        };
        if !v.is_empty() {
            self.record(key, &v);
        }
        Ok(v)
    }

    pub fn record<T: Serialize>(&mut self, key: &str, v: &T) {
        self.resolved
            .insert(key.to_string(), serde_json::to_value(v).unwrap_or(serde_json::Value::Null));
    }
}

pub fn default_out() -> PathBuf {
    PathBuf::from("out")
}

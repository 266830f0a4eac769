use std::cell::RefCell;
use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;

use crate::UsageError;

/// One `[subcommand]` table of the optional TOML config file.
#[derive(Default)]
pub struct Section {
    table: toml::Table,
    used: RefCell<BTreeSet<String>>,
    name: String,
}

fn norm(key: &str) -> String {
    key.replace('_', "-")
}

impl Section {
    pub fn load(path: Option<&Path>, subcommand: &str) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut root: toml::Table = text
            .parse()
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let table = match root.remove(subcommand) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(UsageError(format!("config: [{subcommand}] must be a table")).into()),
            None => toml::Table::new(),
        };
        let table = table.into_iter().map(|(k, v)| (norm(&k), v)).collect();
        Ok(Self {
            table,
            used: RefCell::default(),
            name: subcommand.to_string(),
        })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.used.borrow_mut().insert(key.to_string());
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| UsageError(format!("config [{}] {key}: {e}", self.name)).into()),
        }
    }

    /// Flag value if given, else config value, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        let from_config = self.get(key)?;
        Ok(flag.or(from_config).unwrap_or(default))
    }

    pub fn require<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T> {
        let from_config = self.get(key)?;
        flag.or(from_config)
            .ok_or_else(|| UsageError(format!("missing required option --{key}")).into())
    }

    pub fn optional<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        let from_config = self.get(key)?;
        Ok(flag.or(from_config))
    }

    /// Rejects config keys that no option looked up.
    pub fn finish(self) -> Result<()> {
        let used = self.used.into_inner();
        match self.table.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(UsageError(format!("config [{}]: unknown key {k:?}", self.name)).into()),
            None => Ok(()),
        }
    }
}

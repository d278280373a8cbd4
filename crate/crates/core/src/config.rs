//! `key=value` run configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! train_features = data/train.feat
//! train_labels   = data/train.labels
//! query_features = data/query.feat
//! query_labels   = data/query.labels
//! out            = runs/k16
//! bits = 16
//! eta  = 0.2
//! beta = 25
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Every key a config file may contain.
pub const KNOWN_KEYS: &[&str] = &[
    "train_features",
    "train_labels",
    "query_features",
    "query_labels",
    "checkpoint",
    "codes",
    "out",
    "bits",
    "eta",
    "beta",
    "lr",
    "epochs",
    "batch",
    "seed",
    "shuffle_seed",
    "decay",
    "checkpoint_interval",
    "database",
    "topk",
    "radius",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    /// Directory of the config file; relative paths resolve against it.
    base: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key {key:?}",
                    i + 1
                )));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    i + 1
                )));
            }
        }
        Ok(RunConfig { values, base: None })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key), "unknown key {key}");
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| match &self.base {
            Some(base) if Path::new(v).is_relative() => base.join(v),
            _ => PathBuf::from(v),
        })
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KNOWN_KEYS.contains(&key), "unknown key {key}");
        self.values.insert(key.to_string(), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_types_values() {
        let cfg = RunConfig::parse("# run\nbits = 16\neta=0.2\n\nout = runs/a\n").unwrap();
        assert_eq!(cfg.get::<usize>("bits").unwrap(), Some(16));
        assert_eq!(cfg.get::<f64>("eta").unwrap(), Some(0.2));
        assert_eq!(cfg.get::<f64>("beta").unwrap(), None);
        assert_eq!(cfg.path("out"), Some(PathBuf::from("runs/a")));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(RunConfig::parse("colour=blue")
            .unwrap_err()
            .to_string()
            .contains("colour"));
        assert!(RunConfig::parse("bits=1\nbits=2").is_err());
        assert!(RunConfig::parse("bits").is_err());
        let cfg = RunConfig::parse("bits=many").unwrap();
        assert!(cfg.get::<usize>("bits").is_err());
    }

    #[test]
    fn missing_key_is_named() {
        let err = RunConfig::parse("")
            .unwrap()
            .require_path("train_features")
            .unwrap_err();
        assert!(err.to_string().contains("train_features"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn relative_paths_follow_config_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "train_features = a.feat\nout = /abs/out\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.path("train_features"), Some(dir.path().join("a.feat")));
        assert_eq!(cfg.path("out"), Some(PathBuf::from("/abs/out")));
    }
}

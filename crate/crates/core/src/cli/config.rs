//! Flat `key = value` configuration with flag overrides.
//!
//! Keys are flag names without the leading dashes (`svr-c = 10`); underscores
//! and dashes are interchangeable. Lines starting with `#` are comments.
//! Every value a command resolves is recorded, and the recorded set is
//! hashed into the artifact metadata. Output paths are not recorded, so
//! writing the same artifact elsewhere does not change its metadata.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn canonical_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected 'key = value'", no + 1))
            })?;
            let key = canonical_key(k);
            if key.is_empty() {
                return Err(CliError::Usage(format!(
                    "config line {}: empty key",
                    no + 1
                )));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key '{key}'",
                    no + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(&canonical_key(key)).map(String::as_str)
    }
}

/// Resolves settings for one command: flag, then config file, then default.
pub struct Settings<'a> {
    config: &'a Config,
    effective: BTreeMap<String, String>,
}

impl<'a> Settings<'a> {
    pub fn new(config: &'a Config) -> Self {
        Self {
            config,
            effective: BTreeMap::new(),
        }
    }

    fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.config
            .get(key)
            .map(|raw| {
                raw.parse::<T>().map_err(|_| {
                    CliError::Usage(format!("config key '{key}': invalid value '{raw}'"))
                })
            })
            .transpose()
    }

    pub fn opt<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, CliError> {
        let value = match flag {
            Some(v) => Some(v),
            None => self.lookup(key)?,
        };
        if let Some(v) = &value {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    pub fn value<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError> {
        let v = self.opt(key, flag)?.unwrap_or(default);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn required<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<T, CliError> {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }

    /// A path that is not part of the configuration hash.
    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.opt_path(key, flag)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key}")))
    }

    pub fn opt_path(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<Option<PathBuf>, CliError> {
        Ok(flag.or_else(|| self.config.get(key).map(PathBuf::from)))
    }

    /// Repeated flag, or a comma-separated config value.
    pub fn paths(&mut self, key: &str, flags: Vec<PathBuf>) -> Vec<PathBuf> {
        if !flags.is_empty() {
            return flags;
        }
        self.config
            .get(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Comma-separated list of values.
    pub fn list<T: FromStr>(
        &mut self,
        key: &str,
        flag: Option<String>,
    ) -> Result<Option<Vec<T>>, CliError> {
        let Some(raw) = self.opt(key, flag)? else {
            return Ok(None);
        };
        raw.split(',')
            .map(|s| {
                s.trim().parse::<T>().map_err(|_| {
                    CliError::Usage(format!("--{key}: invalid list item '{}'", s.trim()))
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    /// SHA-256 over the sorted `key=value` lines of every resolved setting.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.effective {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_precedence() {
        let cfg = Config::parse("# comment\nsvr_c = 100\nngram-range=3:5\n\n").unwrap();
        let mut s = Settings::new(&cfg);
        assert_eq!(s.value("svr-c", None, 10.0).unwrap(), 100.0);
        assert_eq!(s.value("svr-nu", None, 0.5).unwrap(), 0.5);
        let mut t = Settings::new(&cfg);
        assert_eq!(t.value("svr-c", Some(1.0), 10.0).unwrap(), 1.0);
        assert_ne!(s.hash(), t.hash());
    }

    #[test]
    fn rejects_malformed() {
        assert!(Config::parse("novalue\n").is_err());
        assert!(Config::parse("a = 1\na = 2\n").is_err());
        let cfg = Config::parse("svr-c = ten\n").unwrap();
        assert!(Settings::new(&cfg).value("svr-c", None, 10.0).is_err());
    }

    #[test]
    fn hash_ignores_paths_and_order() {
        let cfg = Config::default();
        let mut a = Settings::new(&cfg);
        a.value("x", Some(1u32), 0).unwrap();
        a.value("y", Some(2u32), 0).unwrap();
        a.path("out", Some("a.tsv".into())).unwrap();
        let mut b = Settings::new(&cfg);
        b.value("y", Some(2u32), 0).unwrap();
        b.value("x", Some(1u32), 0).unwrap();
        b.path("out", Some("b.tsv".into())).unwrap();
        assert_eq!(a.hash(), b.hash());
    }
}

//! `key = value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Parsed configuration. Keys are validated against the subcommand's
/// allowed set when the config is built.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn parse_line(line: &str, origin: &str) -> Result<Option<(String, String)>, CliError> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return Ok(None);
    }
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("{origin}: expected 'key = value', got '{line}'")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(CliError::Config(format!("{origin}: empty key")));
    }
    Ok(Some((k.to_string(), v.trim().to_string())))
}

impl RunConfig {
    /// Load `file` (if any), then apply `overrides` of the form `key=value`.
    pub fn load(file: Option<&Path>, overrides: &[String], allowed: &[&str]) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                if let Some((k, v)) = parse_line(line, &format!("{}:{}", path.display(), i + 1))? {
                    values.insert(k, v);
                }
            }
        }
        for o in overrides {
            if let Some((k, v)) = parse_line(o, "--set")? {
                values.insert(k, v);
            }
        }
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        if let Some(k) = values.keys().find(|k| !allowed.contains(k.as_str())) {
            return Err(CliError::Config(format!("unknown config key '{k}'")));
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| CliError::Config(format!("missing required key '{key}'")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.require(key).map(PathBuf::from)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| CliError::Config(format!("key '{key}' has invalid value '{v}'"))))
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(CliError::Config(format!("key '{key}' expects true or false, got '{v}'"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|_| CliError::Config(format!("key '{key}' has invalid entry '{s}'"))))
                    .collect()
            })
            .transpose()
    }

    pub fn dims(&self, key: &str) -> Result<Option<[usize; 4]>, CliError> {
        match self.list::<usize>(key)? {
            None => Ok(None),
            Some(v) if v.len() == 4 => Ok(Some([v[0], v[1], v[2], v[3]])),
            Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2], 1])),
            Some(_) => Err(CliError::Config(format!("key '{key}' expects nx,ny,nz[,nt]"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nlambda1 = 2.5\nx = data.csv  # trailing\n\n").unwrap();
        let cfg = RunConfig::load(Some(&path), &["lambda1=4".into()], &["lambda1", "x"]).unwrap();
        assert_eq!(cfg.parse::<f64>("lambda1").unwrap(), Some(4.0));
        assert_eq!(cfg.get("x"), Some("data.csv"));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(RunConfig::load(None, &["bogus=1".into()], &["x"]), Err(CliError::Config(_))));
        assert!(RunConfig::load(None, &["novalue".into()], &["x"]).is_err());
        let cfg = RunConfig::load(None, &["x=abc".into()], &["x"]).unwrap();
        assert!(cfg.parse::<f64>("x").is_err());
        assert!(cfg.require("y").unwrap_err().to_string().contains("'y'"));
    }

    #[test]
    fn lists_and_dims() {
        let cfg = RunConfig::load(None, &["d=4,3,2".into(), "l=1, 2,3".into()], &["d", "l"]).unwrap();
        assert_eq!(cfg.dims("d").unwrap(), Some([4, 3, 2, 1]));
        assert_eq!(cfg.list::<f64>("l").unwrap(), Some(vec![1.0, 2.0, 3.0]));
    }
}

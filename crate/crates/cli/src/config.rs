//! Parameter resolution: command-line flag, then `--config` JSON value, then default.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde_json::{Map, Value};

pub struct Resolver {
    file: Map<String, Value>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            None => Map::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                match serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
                {
                    Value::Object(m) => m,
                    _ => return Err(anyhow!("config {} must hold a JSON object", p.display())),
                }
            }
        };
        Ok(Resolver { file })
    }

    /// `flag` if given, else the config entry `key`, else `default`.
    pub fn get<T: serde::de::DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.file.get(key) {
            Some(v) => {
                serde_json::from_value(v.clone()).with_context(|| format!("config key {key:?}"))
            }
            None => Ok(default),
        }
    }

    /// Like [`Resolver::get`] without a default.
    pub fn get_opt<T: serde::de::DeserializeOwned>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|v| {
                serde_json::from_value(v.clone()).with_context(|| format!("config key {key:?}"))
            })
            .transpose()
    }

    pub fn require<T: serde::de::DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.get_opt(flag, key)?.ok_or_else(|| {
            anyhow!(
                "missing required parameter --{} (or config key {key:?})",
                key.replace('_', "-")
            )
        })
    }
}

/// Parses "16,32,64"-style lists.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|e| anyhow!("bad list entry {p:?}: {e}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"epochs": 7, "margin": 0.5}"#).unwrap();
        let r = Resolver::load(Some(&path)).unwrap();
        assert_eq!(r.get(Some(3usize), "epochs", 100).unwrap(), 3);
        assert_eq!(r.get(None, "epochs", 100usize).unwrap(), 7);
        assert_eq!(r.get(None, "alpha", 1.0f64).unwrap(), 1.0);
        assert!(r.get::<usize>(None, "margin", 1).is_err());
        assert!(r.require::<String>(None, "features").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("16, 32,64").unwrap(), vec![16, 32, 64]);
        assert!(parse_list::<usize>("16,x").is_err());
    }
}

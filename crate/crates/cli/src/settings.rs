//! Flag values merged with the optional config file, plus a record of what was used.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use llfl::io::read_run_config;

use crate::error::{CliError, CliResult};

pub const KNOWN_KEYS: &[&str] = &[
    "facts",
    "embeddings",
    "examples",
    "benchmark",
    "mode",
    "tasks",
    "trials",
    "method",
    "lambda",
    "epochs",
    "lr",
    "seed",
    "topk",
    "out",
    "checkpoints",
    "report",
    "clusters",
    "facts_per_cluster",
    "feature_dim",
    "embed_dim",
    "train_per_fact",
    "test_per_fact",
    "cluster_signal",
    "long_tail",
];

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(config: Option<&Path>) -> CliResult<Self> {
        let file = match config {
            Some(p) => read_run_config(p)?,
            None => BTreeMap::new(),
        };
        if let Some(bad) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::usage(format!("unknown config key `{bad}`")));
        }
        Ok(Settings { file, used: BTreeMap::new() })
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    raw.parse::<T>()
                        .map_err(|e| CliError::usage(format!("config `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.used.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn or<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.used.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn req<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| CliError::usage(format!("--{} is required", key.replace('_', "-"))))
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        let p = match flag {
            Some(p) => p,
            None => self
                .file
                .get(key)
                .map(PathBuf::from)
                .ok_or_else(|| CliError::usage(format!("--{key} is required")))?,
        };
        self.used.insert(key.to_string(), p.display().to_string());
        Ok(p)
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        let on = flag || self.opt::<bool>(key, None)?.unwrap_or(false);
        self.used.insert(key.to_string(), on.to_string());
        Ok(on)
    }

    /// Every setting consulted so far, with the value it resolved to.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.used.clone()
    }
}

/// Parses `1,5,10`; duplicates are dropped and order is ascending.
pub fn parse_topk(s: &str) -> CliResult<Vec<usize>> {
    let mut ks = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| CliError::usage(format!("bad --topk entry `{t}`")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_config() {
        let mut s = Settings::default();
        s.file.insert("seed".into(), "9".into());
        s.file.insert("epochs".into(), "3".into());
        assert_eq!(s.req::<u64>("seed", Some(4)).unwrap(), 4);
        assert_eq!(s.req::<usize>("epochs", None).unwrap(), 3);
        assert_eq!(s.or::<f64>("lr", None, 0.5).unwrap(), 0.5);
        assert!(s.req::<String>("method", None).is_err());
        assert_eq!(s.snapshot()["seed"], "4");
        assert_eq!(s.snapshot()["lr"], "0.5");
    }

    #[test]
    fn topk_lists() {
        assert_eq!(parse_topk("10,1,5,5").unwrap(), vec![1, 5, 10]);
        assert!(parse_topk("0").is_err());
        assert!(parse_topk("1,x").is_err());
    }
}

//! Run configuration: a TOML file flattened to dotted keys, with every key
//! overridable from the command line as `--dotted.key value` or
//! `--dotted.key=value`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
    /// Directory of the config file; relative paths it names resolve here.
    base_dir: Option<PathBuf>,
    overridden: BTreeSet<String>,
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut BTreeMap<String, String>) {
    let join = |key: &str| {
        if prefix.is_empty() {
            key.to_string()
        } else {
            format!("{prefix}.{key}")
        }
    };
    match value {
        toml::Value::Table(table) => {
            for (k, v) in table {
                flatten(&join(k), v, out);
            }
        }
        toml::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        toml::Value::Array(items) => {
            let parts: Vec<String> = items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            out.insert(prefix.to_string(), parts.join(","));
        }
        toml::Value::Float(f) => {
            out.insert(prefix.to_string(), format!("{f:?}"));
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str, base_dir: Option<PathBuf>) -> Result<Self> {
        let table: toml::Table = text.parse().context("parsing config")?;
        let mut values = BTreeMap::new();
        flatten("", &toml::Value::Table(table), &mut values);
        Ok(Config {
            values,
            base_dir,
            overridden: BTreeSet::new(),
        })
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                Config::from_toml_str(&text, p.parent().map(Path::to_path_buf))
                    .with_context(|| format!("in {}", p.display()))?
            }
            None => Config::default(),
        };
        config.apply_overrides(overrides)?;
        Ok(config)
    }

    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                bail!("expected --key value, found `{arg}`");
            };
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it.next().ok_or_else(|| anyhow!("--{flag} needs a value"))?;
                    (flag.to_string(), v.clone())
                }
            };
            if key.is_empty() || key.split('.').any(str::is_empty) {
                bail!("malformed key `{key}`");
            }
            self.set(&key, value);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
        self.overridden.insert(key.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.trim()
                    .parse()
                    .map_err(|e| anyhow!("config key `{key}` = `{v}`: {e}"))
            })
            .transpose()
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| anyhow!("missing config key `{key}`"))
    }

    /// A path value; relative paths from the file resolve against its
    /// directory, those from the command line against the working directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        let raw = PathBuf::from(self.get(key)?);
        match &self.base_dir {
            Some(base) if raw.is_relative() && !self.overridden.contains(key) => {
                Some(base.join(raw))
            }
            _ => Some(raw),
        }
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| anyhow!("missing config key `{key}`"))
    }

    /// Keys under `prefix.`, with the prefix removed.
    pub fn section(&self, prefix: &str) -> Vec<(&str, &str)> {
        let p = format!("{prefix}.");
        self.values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|rest| (rest, v.as_str())))
            .collect()
    }

    pub fn has_section(&self, prefix: &str) -> bool {
        !self.section(prefix).is_empty()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path("output.dir")
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
[design]
seed = 7
frame.1.n = 4
frame.1.m = "10"
frame.2.m = [1, 2, 3]

[input]
population = "pop.txt"

[estimate]
reference = 3660.0
"#;

    #[test]
    fn flattens_to_dotted_keys() {
        let c = Config::from_toml_str(TEXT, Some(PathBuf::from("/data"))).unwrap();
        assert_eq!(c.get("design.frame.1.n"), Some("4"));
        assert_eq!(c.get("design.frame.1.m"), Some("10"));
        assert_eq!(c.get("design.frame.2.m"), Some("1,2,3"));
        assert_eq!(c.get("estimate.reference"), Some("3660.0"));
        assert_eq!(c.section("design").len(), 4);
        assert_eq!(
            c.path("input.population"),
            Some(PathBuf::from("/data/pop.txt"))
        );
    }

    #[test]
    fn overrides_replace_values() {
        let mut c = Config::from_toml_str(TEXT, Some(PathBuf::from("/data"))).unwrap();
        let args: Vec<String> = [
            "--design.seed",
            "9",
            "--input.population=other.txt",
            "--new.key",
            "x",
        ]
        .map(String::from)
        .to_vec();
        c.apply_overrides(&args).unwrap();
        assert_eq!(c.require::<u64>("design.seed").unwrap(), 9);
        assert_eq!(c.path("input.population"), Some(PathBuf::from("other.txt")));
        assert_eq!(c.get("new.key"), Some("x"));
        assert!(c.apply_overrides(&["--dangling".to_string()]).is_err());
        assert!(c.apply_overrides(&["value".to_string()]).is_err());
        assert!(c
            .apply_overrides(&["--a..b".to_string(), "1".to_string()])
            .is_err());
    }

    #[test]
    fn typed_lookups() {
        let c = Config::from_toml_str(TEXT, None).unwrap();
        assert_eq!(c.parse_or("estimate.reference", 0.0).unwrap(), 3660.0);
        assert_eq!(c.parse_or("cluster.k", 5usize).unwrap(), 5);
        assert!(c.require::<usize>("cluster.k").is_err());
        assert!(c.parse::<u64>("input.population").is_err());
    }
}

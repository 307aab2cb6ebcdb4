use crate::CliError;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Keys a config file may set. They share names with the long flags.
const KNOWN_KEYS: &[&str] = &[
    "levels",
    "order",
    "drop-tol",
    "threshold",
    "lambda-a",
    "history",
    "horizon",
    "epochs",
    "seed",
    "threads",
    "hidden",
    "layers",
    "batch",
    "lr",
    "lr-decay",
    "lr-decay-every",
    "dropout",
    "tau",
    "period",
    "nodes",
    "neighbors",
    "runs",
    "steps",
];

/// `key = value` settings. Lines may hold `#` comments.
#[derive(Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", i + 1)))?;
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: invalid value `{v}`: {e}")))
            })
            .transpose()
    }

    /// Flag, then config file, then `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.lookup(key)?.unwrap_or(default),
        })
    }

    /// Like [`ConfigFile::pick`] for settings without a default.
    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => self
                .lookup(key)?
                .ok_or_else(|| CliError::Usage(format!("missing required setting --{key}"))),
        }
    }
}

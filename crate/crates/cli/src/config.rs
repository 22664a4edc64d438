//! `key = value` config files and flag/file/default resolution.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every key a config file may set, across all subcommands.
pub const KNOWN_KEYS: &[&str] = &[
    "c",
    "jump-rate",
    "claim-mean",
    "claim-mix",
    "x0",
    "y",
    "q",
    "theta",
    "gamma",
    "gamma-grid",
    "gamma-pieces",
    "gamma-l",
    "a",
    "restart",
    "estimator",
    "x-grid",
    "drifts",
    "paths",
    "seed",
    "t-max",
    "workers",
    "k-sigma",
    "checks",
    "format",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Invalid(format!("config line {}: expected `key = value`", n + 1))
            })?;
            let key = k.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Invalid(format!(
                    "config line {}: unknown key `{key}`",
                    n + 1
                )));
            }
            entries.insert(key, v.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// Resolves settings with precedence flag > config file > default and
/// records every resolved value for the `# config:` line.
#[derive(Debug)]
pub struct Resolver<'a> {
    file: &'a ConfigFile,
    resolved: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a ConfigFile) -> Self {
        Self {
            file,
            resolved: Vec::new(),
        }
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.file
            .get(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| CliError::Invalid(format!("config `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn value<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.resolved.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(v)
    }

    /// File value for `key`, not recorded in the config line.
    pub fn silent<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        self.file_value(key)
    }

    /// Record a derived setting without resolving it.
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    /// `# config: k=v k=v ...` in resolution order.
    pub fn comment_line(&self) -> String {
        let body: Vec<String> = self
            .resolved
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!("# config: {}", body.join(" "))
    }
}

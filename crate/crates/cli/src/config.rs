//! Flat `dotted.key = value` run configs layered under command-line flags.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "config line {}: expected `key = value`, got `{}`",
                i + 1,
                raw.trim()
            )));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(CliError::Config(format!("config line {}: bad key `{k}`", i + 1)));
        }
        out.push((k.to_owned(), v.to_owned()));
    }
    Ok(out)
}

/// Config values from a file with flag overrides on top. Every key must be
/// claimed by the command; leftovers are reported as unknown.
pub struct Layered {
    given: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
    derived: BTreeMap<String, String>,
}

impl Layered {
    pub fn new(file: Option<&Path>, flags: Vec<(String, String)>) -> Result<Self, CliError> {
        let mut given = BTreeMap::new();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            for (k, v) in parse_config(&text)? {
                if given.insert(k.clone(), v).is_some() {
                    return Err(CliError::Config(format!("key `{k}` appears twice in {}", path.display())));
                }
            }
        }
        given.extend(flags);
        Ok(Self {
            given,
            resolved: BTreeMap::new(),
            derived: BTreeMap::new(),
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.given.remove(key)
    }

    fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        v.parse()
            .map_err(|e| CliError::Config(format!("bad value `{v}` for `{key}`: {e}")))
    }

    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match self.take(key) {
            Some(v) => Self::parse(key, &v)?,
            None => default,
        };
        self.resolved.insert(key.to_owned(), v.to_string());
        Ok(v)
    }

    pub fn opt<T>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = self.take(key).map(|v| Self::parse::<T>(key, &v)).transpose()?;
        if let Some(v) = &v {
            self.resolved.insert(key.to_owned(), v.to_string());
        }
        Ok(v)
    }

    pub fn req<T>(&mut self, key: &str) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// Records a value computed from the config for the echo.
    pub fn derive(&mut self, key: &str, value: impl Display) {
        self.derived.insert(key.to_owned(), value.to_string());
    }

    pub fn finish(self) -> Result<Resolved, CliError> {
        if let Some(k) = self.given.keys().next() {
            return Err(CliError::Config(format!(
                "unknown config key `{k}` (known here: {})",
                self.resolved.keys().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(Resolved {
            values: self.resolved,
            derived: self.derived,
        })
    }
}

/// The fully resolved config of one run.
#[derive(Debug, Clone, Default)]
pub struct Resolved {
    pub values: BTreeMap<String, String>,
    pub derived: BTreeMap<String, String>,
}

impl Resolved {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "config": self.values, "derived": self.derived })
    }
}

impl Display for Resolved {
    /// Re-loadable with `--config`; derived values are comments.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        for (k, v) in &self.derived {
            writeln!(f, "# derived {k} = {v}")?;
        }
        Ok(())
    }
}

/// Comma-separated list value.
#[derive(Debug, Clone, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("`{}`: {e}", p.trim())))
            .collect::<Result<_, _>>()
            .map(List)
    }
}

impl<T: Display> Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

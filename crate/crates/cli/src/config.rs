//! Layered run configuration: `key = value` file, then `RDN_*` environment
//! variables, then command-line flags, each overriding the one before.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

/// Every key the commands read. Anything else in a config file or an
/// `RDN_` variable is rejected.
pub const KNOWN_KEYS: &[&str] = &[
    "ablation",
    "brightness",
    "confidence",
    "contrast",
    "count",
    "epochs",
    "generator",
    "grid_stride",
    "iterations",
    "lr",
    "margin",
    "max_perspective",
    "max_rotation",
    "max_scale",
    "max_translation",
    "model",
    "noise",
    "profile",
    "ratio",
    "seed",
    "size",
    "stride",
    "threshold",
    "thresholds",
];

pub const ENV_PREFIX: &str = "RDN_";
pub const DEFAULT_FILE: &str = "rdn.conf";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    File,
    Env,
}

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, (String, Source)>,
}

fn normalize_key(raw: &str) -> String {
    raw.trim().to_ascii_lowercase().replace('-', "_")
}

fn check_key(key: &str, origin: &str) -> Result<(), CliError> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown key {key:?} in {origin}")))
    }
}

impl RunConfig {
    /// Parses config text. `#` starts a comment anywhere on a line.
    pub fn parse_file(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config(format!("{origin}:{}: expected `key = value`", i + 1)));
            };
            let key = normalize_key(k);
            check_key(&key, &format!("{origin}:{}", i + 1))?;
            cfg.values.insert(key, (v.trim().to_string(), Source::File));
        }
        Ok(cfg)
    }

    /// Overlays `RDN_*` variables, e.g. `RDN_GRID_STRIDE` sets `grid_stride`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = normalize_key(rest);
            check_key(&key, &format!("environment variable {name}"))?;
            self.values.insert(key, (value, Source::Env));
        }
        Ok(())
    }

    /// File given explicitly, else `rdn.conf` in the working directory if
    /// present, then the process environment.
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let default = Path::new(DEFAULT_FILE);
        let path = match explicit {
            Some(p) => Some(p),
            None if default.is_file() => Some(default),
            None => None,
        };
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse_file(&text, &p.display().to_string())?
            }
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn source(&self, key: &str) -> Option<Source> {
        self.values.get(key).map(|(_, s)| *s)
    }

    /// The flag value if given, else the configured value, else `default`.
    pub fn resolve<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.resolve_opt(key, flag)?.unwrap_or(default))
    }

    pub fn resolve_opt<T>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unregistered key {key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((raw, source)) => raw.parse().map(Some).map_err(|e| {
                CliError::Config(format!("bad value {raw:?} for {key} ({source:?}): {e}"))
            }),
        }
    }
}

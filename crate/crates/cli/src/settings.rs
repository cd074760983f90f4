//! Flat `key = value` run configuration.
//!
//! Every subcommand declares its keys once. The same table drives the
//! command-line flags, the accepted config-file keys and the resolved-config
//! echo. Precedence: defaults, then the config file, then flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use clap::{Arg, ArgMatches, Command};

use crate::CliError;

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

pub const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Adds one `--name VALUE` flag per key.
pub fn with_flags(mut cmd: Command, keys: &[Key]) -> Command {
    for k in keys {
        let help =
            if k.default.is_empty() { k.help.to_string() } else { format!("{} [default: {}]", k.help, k.default) };
        cmd = cmd.arg(Arg::new(k.name).long(k.name).value_name("VALUE").allow_negative_numbers(true).help(help));
    }
    cmd
}

/// Parses a config file into `(key, value, line)` entries.
fn parse_file(path: &Path) -> Result<Vec<(String, String, usize)>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("{}:{}: expected key = value", path.display(), i + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Settings {
    keys: Vec<Key>,
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn resolve(keys: Vec<Key>, matches: &ArgMatches, config: Option<&Path>) -> Result<Self, CliError> {
        let mut values: BTreeMap<&'static str, String> = keys.iter().map(|k| (k.name, k.default.to_string())).collect();
        if let Some(path) = config {
            let mut seen = BTreeMap::new();
            for (k, v, line) in parse_file(path)? {
                let Some(known) = keys.iter().find(|x| x.name == k) else {
                    return Err(CliError::Usage(format!("{}:{line}: unknown key `{k}`", path.display())));
                };
                if let Some(first) = seen.insert(known.name, line) {
                    return Err(CliError::Usage(format!(
                        "{}:{line}: key `{k}` already set on line {first}",
                        path.display()
                    )));
                }
                values.insert(known.name, v);
            }
        }
        for k in &keys {
            if let Some(v) = matches.get_one::<String>(k.name) {
                values.insert(k.name, v.clone());
            }
        }
        Ok(Self { keys, values })
    }

    /// Resolved configuration in declaration order, loadable with `--config`.
    pub fn echo(&self) -> String {
        self.keys.iter().map(|k| format!("{} = {}\n", k.name, self.values[k.name])).collect()
    }

    pub fn str(&self, name: &str) -> &str {
        self.values.get(name).unwrap_or_else(|| panic!("undeclared key {name}"))
    }

    fn bad(name: &str, what: &str, got: &str) -> CliError {
        CliError::Usage(format!("--{name}: expected {what}, got `{got}`"))
    }

    pub fn f64(&self, name: &str) -> Result<f64, CliError> {
        let s = self.str(name);
        s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Self::bad(name, "a finite number", s))
    }

    pub fn positive(&self, name: &str) -> Result<f64, CliError> {
        let v = self.f64(name)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Self::bad(name, "a positive number", self.str(name)))
        }
    }

    pub fn non_negative(&self, name: &str) -> Result<f64, CliError> {
        let v = self.f64(name)?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(Self::bad(name, "a non-negative number", self.str(name)))
        }
    }

    pub fn u64(&self, name: &str) -> Result<u64, CliError> {
        let s = self.str(name);
        s.parse().map_err(|_| Self::bad(name, "a non-negative integer", s))
    }

    pub fn count(&self, name: &str) -> Result<usize, CliError> {
        let s = self.str(name);
        s.parse::<usize>().ok().filter(|v| *v > 0).ok_or_else(|| Self::bad(name, "a positive integer", s))
    }

    pub fn bool(&self, name: &str) -> Result<bool, CliError> {
        match self.str(name) {
            "true" | "yes" | "1" | "on" => Ok(true),
            "false" | "no" | "0" | "off" => Ok(false),
            s => Err(Self::bad(name, "true or false", s)),
        }
    }

    /// Comma-separated positive numbers; empty means "not given".
    pub fn list(&self, name: &str) -> Result<Option<Vec<f64>>, CliError> {
        let s = self.str(name);
        if s.is_empty() {
            return Ok(None);
        }
        s.split(',')
            .map(|p| p.trim().parse::<f64>().ok().filter(|v| *v > 0.0 && v.is_finite()))
            .collect::<Option<Vec<_>>>()
            .map(Some)
            .ok_or_else(|| Self::bad(name, "comma-separated positive numbers", s))
    }

    pub fn choice<'a>(&'a self, name: &str, options: &[&str]) -> Result<&'a str, CliError> {
        let s = self.str(name);
        if options.contains(&s) {
            Ok(s)
        } else {
            Err(Self::bad(name, &format!("one of {}", options.join(", ")), s))
        }
    }
}

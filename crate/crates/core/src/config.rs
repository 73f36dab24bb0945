//! Flat `key = value` configuration files. Lines starting with `#` are
//! comments, keys use the long flag names (`schemes`, `ref-exp`, ...).

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

fn valid_key(k: &str) -> bool {
    !k.is_empty() && k.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", i + 1)))?;
            let key = k.trim().replace('_', "-");
            let value = v.trim();
            if !valid_key(&key) {
                return Err(Error::Parse(format!("line {}: invalid key '{}'", i + 1, k.trim())));
            }
            if value.is_empty() {
                return Err(Error::Parse(format!("line {}: key '{key}' has no value", i + 1)));
            }
            if entries.insert(key.clone(), value.to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: key '{key}' given twice", i + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Parse(format!("key '{key}': cannot parse '{v}': {e}"))))
            .transpose()
    }

    /// Sets `key`, replacing any value read from a file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renders the map back to the file format, one key per line in sorted order.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Parses an exponent range: `3..12`, `3..=12`, `3-12`, or a list `3,5,7`.
pub fn parse_exponents(s: &str) -> Result<Vec<u32>> {
    let t = s.trim();
    let num = |p: &str| p.trim().parse::<u32>().map_err(|_| Error::Parse(format!("bad exponent '{}'", p.trim())));
    let range = t.split_once("..=").or_else(|| t.split_once("..")).or_else(|| t.split_once('-'));
    let out: Vec<u32> = match range {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if a > b {
                return Err(Error::Parse(format!("empty exponent range '{t}'")));
            }
            (a..=b).collect()
        }
        None => t.split(',').map(num).collect::<Result<_>>()?,
    };
    if out.is_empty() {
        return Err(Error::Parse("no exponents given".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let c = ConfigMap::parse("# header\npreset = set-i\n\n  schemes=sd,biss \nref_exp = 13\n").unwrap();
        assert_eq!(c.get("preset"), Some("set-i"));
        assert_eq!(c.get("schemes"), Some("sd,biss"));
        assert_eq!(c.get_parsed::<u32>("ref-exp").unwrap(), Some(13));
        assert_eq!(ConfigMap::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigMap::parse("novalue").is_err());
        assert!(ConfigMap::parse("a =").is_err());
        assert!(ConfigMap::parse("a = 1\na = 2").is_err());
        assert!(ConfigMap::parse("Bad Key = 1").is_err());
        let c = ConfigMap::parse("seed = x").unwrap();
        assert!(c.get_parsed::<u64>("seed").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = ConfigMap::parse("seed = 1").unwrap();
        c.set("seed", "2");
        assert_eq!(c.get("seed"), Some("2"));
    }

    #[test]
    fn exponent_forms() {
        assert_eq!(parse_exponents("3..5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_exponents("3..=5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_exponents("3-5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_exponents("3, 7").unwrap(), vec![3, 7]);
        assert!(parse_exponents("5..3").is_err());
        assert!(parse_exponents("x").is_err());
    }
}

//! Plain-text `key = value` configuration files.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Keys must be unique. Values are trimmed but otherwise uninterpreted.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type KeyValues = BTreeMap<String, String>;

pub fn parse(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key = value", i + 1)));
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(key.to_owned(), value.trim().to_owned()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
        }
    }
    Ok(out)
}

pub fn render(kv: &KeyValues) -> String {
    kv.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Removes and parses `key` if present.
pub fn take<T>(kv: &mut KeyValues, key: &str) -> Result<Option<T>>
where
    T: FromStr,
    T::Err: Display,
{
    kv.remove(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
        })
        .transpose()
}

/// Comma-separated list value.
pub fn take_list<T>(kv: &mut KeyValues, key: &str) -> Result<Option<Vec<T>>>
where
    T: FromStr,
    T::Err: Display,
{
    kv.remove(key)
        .map(|v| {
            v.split(',')
                .map(|item| {
                    item.trim()
                        .parse::<T>()
                        .map_err(|e| Error::Config(format!("{key} = {v:?}: {e}")))
                })
                .collect()
        })
        .transpose()
}

/// Fails if any key was left unconsumed.
pub fn finish(kv: KeyValues) -> Result<()> {
    if kv.is_empty() {
        Ok(())
    } else {
        let keys: Vec<_> = kv.into_keys().collect();
        Err(Error::Config(format!("unknown keys: {}", keys.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let mut kv = parse("# comment\n dim = 16\nhidden_sizes=8, 4\n\n").unwrap();
        assert_eq!(take::<usize>(&mut kv, "dim").unwrap(), Some(16));
        assert_eq!(take_list::<usize>(&mut kv, "hidden_sizes").unwrap(), Some(vec![8, 4]));
        finish(kv).unwrap();
    }

    #[test]
    fn rejects_duplicates_garbage_and_leftovers() {
        assert!(parse("a = 1\na = 2").is_err());
        assert!(parse("just words").is_err());
        let kv = parse("typo = 3").unwrap();
        assert!(finish(kv).is_err());
        let mut kv = parse("dim = x").unwrap();
        assert!(take::<usize>(&mut kv, "dim").is_err());
    }
}

//! key=value job configuration files. Every key mirrors a CLI flag of the
//! command that loads the file; flags given on the command line override
//! file values. Unknown and duplicate keys are rejected.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn parse_job_config(text: &str, allowed: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(Error::Format(format!("line {}: empty key", lineno + 1)));
        }
        if !allowed.contains(&key) {
            return Err(Error::Format(format!("line {}: unknown key {key:?}", lineno + 1)));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::Format(format!("line {}: duplicate key {key:?}", lineno + 1)));
        }
    }
    Ok(map)
}

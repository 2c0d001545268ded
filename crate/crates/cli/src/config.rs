use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use splitseg::{Error, Result};

use crate::manifest::io_err;

/// Flag values that were actually given on the command line.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<V: Serialize>(&mut self, key: &str, value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("flag value serializes"));
        }
        self
    }
}

/// Resolves a configuration with precedence flag > file > `base`.
pub fn resolve<C>(base: C, file: Option<&Path>, flags: &Overrides) -> Result<(C, Value)>
where
    C: Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(base)?;
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let parsed: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            record: path.display().to_string(),
            message: e.to_string(),
        })?;
        overlay(&mut value, parsed, &path.display().to_string())?;
    }
    overlay(&mut value, Value::Object(flags.0.clone()), "command line")?;
    let config = serde_json::from_value(value.clone()).map_err(|e| Error::InvalidArgument(format!("configuration: {e}")))?;
    // Round-trip so the recorded form is exactly what was used.
    let canonical = serde_json::to_value(&config)?;
    Ok((config, canonical))
}

fn overlay(base: &mut Value, top: Value, origin: &str) -> Result<()> {
    let (Value::Object(base), Value::Object(top)) = (base, top) else {
        return Err(Error::InvalidArgument(format!("{origin}: configuration must be a JSON object")));
    };
    for (k, v) in top {
        match base.get_mut(&k) {
            None => return Err(Error::InvalidArgument(format!("{origin}: unknown configuration key `{k}`"))),
            Some(slot @ Value::Object(_)) if v.is_object() => overlay(slot, v, origin)?,
            Some(slot) => *slot = v,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use splitseg::train::TrainConfig;

    #[test]
    fn flag_beats_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"epochs": 3, "batch_size": 2}"#).unwrap();
        let mut flags = Overrides::default();
        flags.set("epochs", Some(5usize));
        let (tc, _): (TrainConfig, _) = resolve(TrainConfig::default(), Some(&p), &flags).unwrap();
        assert_eq!(tc.epochs, 5);
        assert_eq!(tc.batch_size, 2);
        assert_eq!(tc.momentum, TrainConfig::default().momentum);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"epochz": 3}"#).unwrap();
        let r: Result<(TrainConfig, _)> = resolve(TrainConfig::default(), Some(&p), &Overrides::default());
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}

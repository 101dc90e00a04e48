//! TOML run configuration flattened to dotted keys.
//!
//! Tables become key prefixes, so
//!
//! ```toml
//! [estimate]
//! trials = 20000
//! ```
//!
//! is the key `estimate.trials`. Arrays (including `[[kernels]]`) are leaf
//! values. Command line flags replace file values key by key.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use toml::Value;

use super::CliError;

/// Every key the tool understands.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "threads",
    "rho",
    "delta",
    "family",
    "kernels",
    "kernel.ceiling",
    "data.path",
    "data.format",
    "data.header",
    "data.labels",
    "gram.cache_dir",
    "bound.r",
    "estimate.method",
    "estimate.trials",
    "estimate.exact_cap",
    "sweep.p_values",
    "sweep.m",
    "sweep.r2",
    "train.reg_c",
    "train.max_outer",
    "train.tol",
    "train.model",
    "certify.model",
    "certify.bound",
    "certify.r",
];

/// Keys left out of the report's config echo because they do not affect
/// results.
const UNECHOED: &[&str] = &["threads"];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, Value>,
    /// Directory that file-relative paths resolve against.
    base_dir: PathBuf,
    /// Keys set from the command line; their paths resolve against the
    /// working directory.
    from_flags: BTreeSet<String>,
}

fn flatten(table: &toml::Table, prefix: &str, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(t, &key, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut values = BTreeMap::new();
        flatten(&table, "", &mut values);
        if let Some(key) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        Ok(Self {
            values,
            base_dir: base_dir.to_path_buf(),
            from_flags: BTreeSet::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Overrides `key` with a command line value.
    pub fn set(&mut self, key: &str, value: impl Into<Value>) {
        self.values.insert(key.to_string(), value.into());
        self.from_flags.insert(key.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn wrong_type(key: &str, expected: &str, v: &Value) -> CliError {
        CliError::Config(format!("`{key}` must be {expected}, found {}", v.type_str()))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.values
            .get(key)
            .map(|v| match v {
                Value::Float(f) if f.is_finite() => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                other => Err(Self::wrong_type(key, "a finite number", other)),
            })
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        self.values
            .get(key)
            .map(|v| match v {
                Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                other => Err(Self::wrong_type(key, "a nonnegative integer", other)),
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        self.values
            .get(key)
            .map(|v| v.as_bool().ok_or_else(|| Self::wrong_type(key, "a boolean", v)))
            .transpose()
    }

    pub fn str(&self, key: &str) -> Result<Option<&str>, CliError> {
        self.values
            .get(key)
            .map(|v| v.as_str().ok_or_else(|| Self::wrong_type(key, "a string", v)))
            .transpose()
    }

    pub fn path(&self, key: &str) -> Result<Option<PathBuf>, CliError> {
        Ok(self.str(key)?.map(|s| {
            if self.from_flags.contains(key) {
                PathBuf::from(s)
            } else {
                self.base_dir.join(s)
            }
        }))
    }

    /// Deserializes a value (arrays, tables) into `T`.
    pub fn typed<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.values
            .get(key)
            .map(|v| {
                v.clone()
                    .try_into()
                    .map_err(|e: toml::de::Error| CliError::Config(format!("`{key}`: {e}")))
            })
            .transpose()
    }

    pub fn require<T>(&self, key: &str, v: Option<T>) -> Result<T, CliError> {
        v.ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    /// The effective configuration as a JSON object with dotted keys.
    pub fn echo(&self) -> serde_json::Value {
        let map = self
            .values
            .iter()
            .filter(|(k, _)| !UNECHOED.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), toml_to_json(v)))
            .collect();
        serde_json::Value::Object(map)
    }
}

fn toml_to_json(v: &Value) -> serde_json::Value {
    use serde_json::Value as J;
    match v {
        Value::String(s) => J::String(s.clone()),
        Value::Integer(i) => J::from(*i),
        Value::Float(f) => serde_json::Number::from_f64(*f).map_or(J::Null, J::Number),
        Value::Boolean(b) => J::Bool(*b),
        Value::Datetime(d) => J::String(d.to_string()),
        Value::Array(a) => J::Array(a.iter().map(toml_to_json).collect()),
        Value::Table(t) => J::Object(t.iter().map(|(k, v)| (k.clone(), toml_to_json(v))).collect()),
    }
}

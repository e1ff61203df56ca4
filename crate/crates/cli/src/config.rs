//! Flag and config-file merging. Keys are flag names without the leading
//! dashes; `batch_size` and `batch-size` are the same key.

use std::path::{Path, PathBuf};

use anyhow::Context;
use dupdetect::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Every key any subcommand reads. A shared config file may carry keys
/// for other subcommands; anything outside this list is a typo.
const KNOWN_KEYS: &[&str] = &[
    "base-url", "batch-size", "cache", "compare", "corpus", "csv", "dim", "epochs", "eval-seed", "hash-seed",
    "index", "k", "links", "loss", "lr", "margin", "max-concurrency", "max-tokens", "model", "model-name",
    "neg-ratio", "ns", "out", "out-dim", "posts", "provider", "query-id", "ratio", "request-batch", "retry-limit",
    "scale", "seed", "split-seed", "store", "tag", "tag-filter", "text", "threads", "trailer",
];

pub struct Resolver {
    file: Map<String, Value>,
    resolved: Map<String, Value>,
}

fn normalize(key: &str) -> String {
    key.trim_start_matches('-').replace('_', "-")
}

impl Resolver {
    pub fn new(command: &str, config: Option<&Path>) -> anyhow::Result<Self> {
        let mut file = Map::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
                .context("reading --config")?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let Value::Object(map) = value else {
                return Err(Error::Config(format!("{}: expected a JSON object", path.display())).into());
            };
            for (k, v) in map {
                let key = normalize(&k);
                if !KNOWN_KEYS.contains(&key.as_str()) {
                    return Err(Error::Config(format!("{}: unknown key {k:?}", path.display())).into());
                }
                file.insert(key, v);
            }
        }
        let mut resolved = Map::new();
        resolved.insert("command".into(), Value::String(command.into()));
        Ok(Self { file, resolved })
    }

    /// Flag value if given, else the config file's, else `None`.
    pub fn get<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<Option<T>> {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(
                    serde_json::from_value(raw.clone())
                        .map_err(|e| Error::Config(format!("config key {key:?}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), serde_json::to_value(v)?);
        }
        Ok(value)
    }

    pub fn or<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T> {
        let value = self.get(key, flag)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), serde_json::to_value(&value)?);
        Ok(value)
    }

    pub fn required<T: DeserializeOwned + Serialize>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<T> {
        self.get(key, flag)?.ok_or_else(|| Error::Argument(format!("--{key} is required")).into())
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
        self.required(key, flag)
    }

    /// Records a derived value that has no flag of its own.
    pub fn note(&mut self, key: &str, value: impl Serialize) -> anyhow::Result<()> {
        self.resolved.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// The fully resolved configuration.
    pub fn finish(self) -> Value {
        Value::Object(self.resolved)
    }
}

/// Writes the resolved configuration next to an output file.
pub fn write_echo(out: &Path, resolved: &Value) -> anyhow::Result<()> {
    let mut path = out.as_os_str().to_owned();
    path.push(".config.json");
    let path = PathBuf::from(path);
    let mut text = serde_json::to_string_pretty(resolved)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::Io { path: path.clone(), source: e })?;
    Ok(())
}

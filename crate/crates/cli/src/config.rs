//! Run configuration: a JSON document with `train`, `data` and optional
//! `test` sections, plus dotted-key overrides from the command line.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use trixlab::data::{load_idx, synth_gaussian_mixture, SynthConfig};
use trixlab::{Dataset64, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Synth(SynthConfig),
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth(SynthConfig::default())
    }
}

impl DataSource {
    /// Joins relative IDX paths onto `base` so the source no longer depends
    /// on the working directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::Idx { images, labels, .. } = self {
            *images = base.join(&*images);
            *labels = base.join(&*labels);
        }
    }

    /// Loads the dataset; relative IDX paths resolve against `base`.
    pub fn load(&self, base: &Path) -> CliResult<Dataset64> {
        match self {
            DataSource::Synth(cfg) => Ok(synth_gaussian_mixture(cfg)?),
            DataSource::Idx { images, labels, limit } => {
                let d: Dataset64 = load_idx(base.join(images), base.join(labels))?;
                Ok(match limit {
                    Some(n) => d.head(*n)?,
                    None => d,
                })
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataSource,
    /// Held-out evaluation set; the training set is used when absent.
    pub test: Option<DataSource>,
}

impl RunConfig {
    pub fn from_value(value: Value) -> CliResult<Self> {
        let cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| CliError::Input(format!("invalid config: {e}")))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.data.resolve_paths(base);
        if let Some(t) = &mut self.test {
            t.resolve_paths(base);
        }
    }

    pub fn train_set(&self, base: &Path) -> CliResult<Dataset64> {
        self.data.load(base)
    }

    pub fn test_set(&self, base: &Path) -> CliResult<Dataset64> {
        self.test.as_ref().unwrap_or(&self.data).load(base)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Sets `a.b.c` in a JSON object, creating intermediate objects. The value
/// is parsed as JSON when possible and kept as a string otherwise.
pub fn set_dotted(root: &mut Value, key: &str, raw: &str) -> CliResult<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Input(format!("malformed override key {key:?}")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(CliError::Input(format!("override {key:?} descends into a non-object")));
        }
        node = node
            .as_object_mut()
            .expect("checked object")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), value);
            Ok(())
        }
        None => Err(CliError::Input(format!("override {key:?} descends into a non-object"))),
    }
}

/// Applies `--a.b value` pairs.
pub fn apply_overrides(root: &mut Value, args: &[String]) -> CliResult<()> {
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| CliError::Input(format!("expected --key.path, got {flag:?}")))?;
        let (key, raw) = match key.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Input(format!("override {flag} has no value")))?;
                (key, v.clone())
            }
        };
        set_dotted(root, key, &raw)?;
    }
    Ok(())
}

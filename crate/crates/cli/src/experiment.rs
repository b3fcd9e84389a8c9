//! Experiment documents: one JSON file with every knob of a run, plus
//! `dotted.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use eegmix_core::augment::MixParams;
use eegmix_core::data::{generate_synthetic, load_bundle, DatasetBundle, SynthConfig};
use eegmix_core::model::ModelConfig;
use eegmix_core::train::{TrainConfig, SYNTHETIC_MAX_EPOCHS};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "EEGMIX_OUT";
pub const DEFAULT_OUT: &str = "eegmix-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Bundle directory; exclusive with `synthetic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "one")]
    pub jobs: usize,
    /// Held-out subject for single-fold training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub train: TrainConfig,
}

fn one() -> usize {
    1
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            dataset: None,
            synthetic: None,
            out: None,
            jobs: 1,
            target: None,
            train: TrainConfig::new(ModelConfig::resnet1d(18), MixParams::default(), 0),
        }
    }
}

/// Parses `a.b.c=value`; the value is read as JSON when it parses, as a
/// string otherwise.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{s}` is not key=value")))?;
    let path: Vec<String> = key.split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut node = doc;
    for (i, key) in path.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("`{}` is not an object", path[..i].join("."))))?;
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        node = obj.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("override paths are non-empty")
}

/// Command-line settings layered over the document, highest precedence
/// last: config file, `--set` overrides, dedicated flags.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub dataset: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: Option<String>,
    pub method: Option<String>,
    pub placement: Option<String>,
    pub target: Option<String>,
}

impl ExperimentSpec {
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut doc = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => serde_json::json!({ "train": { "model": ModelConfig::resnet1d(18) } }),
        };
        for s in &o.sets {
            let (path, value) = parse_override(s)?;
            apply_override(&mut doc, &path, value)?;
        }
        let explicit_epochs = doc.pointer("/train/max_epochs").is_some();
        let mut spec: ExperimentSpec =
            serde_json::from_value(doc).map_err(|e| CliError::Usage(format!("experiment config: {e}")))?;
        // Synthetic experiments stop earlier than real-corpus ones unless the
        // document says otherwise.
        if spec.synthetic.is_some() && !explicit_epochs {
            spec.train.max_epochs = SYNTHETIC_MAX_EPOCHS;
            spec.train.patience = spec.train.patience.min(SYNTHETIC_MAX_EPOCHS);
        }
        if let Some(d) = &o.dataset {
            spec.dataset = Some(d.clone());
            spec.synthetic = None;
        }
        if let Some(seed) = o.seed {
            spec.train.seed = seed;
        }
        if let Some(out) = &o.out {
            spec.out = Some(out.clone());
        }
        if let Some(jobs) = o.jobs {
            spec.jobs = jobs;
        }
        if let Some(m) = &o.model {
            let dropout = spec.train.model.dropout;
            spec.train.model = m.parse()?;
            spec.train.model.dropout = dropout;
        }
        if let Some(m) = &o.method {
            spec.train.mix.method = m.parse()?;
        }
        if let Some(p) = &o.placement {
            spec.train.mix.placement = p.split(',').map(|t| t.trim().to_string()).filter(|t| !t.is_empty()).collect();
        }
        if let Some(t) = &o.target {
            spec.target = Some(t.clone());
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.dataset, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage("give either `dataset` or `synthetic`, not both".into()))
            }
            (None, None) => {
                return Err(CliError::Usage(
                    "no data: pass --dataset <dir> or set `synthetic` in the config".into(),
                ))
            }
            _ => {}
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn load_data(&self) -> Result<DatasetBundle, CliError> {
        if let Some(dir) = &self.dataset {
            return Ok(load_bundle(dir)?);
        }
        let cfg = self.synthetic.as_ref().expect("validated");
        Ok(generate_synthetic(cfg)?)
    }

    /// Output directory: the document's or the flag's, else the
    /// environment's root, else the working directory's default.
    pub fn out_dir(&self) -> PathBuf {
        resolve_out(self.out.as_deref())
    }
}

pub fn resolve_out(explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => PathBuf::from(DEFAULT_OUT),
    }
}

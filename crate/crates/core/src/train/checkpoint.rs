//! Per-fold model checkpoints in the same directory-container style as
//! dataset bundles:
//!
//! ```text
//! checkpoint.json   config echo, seed, parameter table, CRC-32 per payload
//! params.bin        f32 LE, parameters concatenated in table order
//! norms.bin         f64 LE, per norm layer: running mean then running var
//! ```

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::ManifestFile;
use crate::error::{Error, Result};
use crate::model::Model;

pub const CHECKPOINT_FORMAT: &str = "eegmix-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "checkpoint.json";
const PARAMS: &str = "params.bin";
const NORMS: &str = "norms.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub target_subject_id: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub config: TrainConfig,
    pub params: Vec<ParamEntry>,
    pub norm_channels: Vec<usize>,
    pub params_file: ManifestFile,
    pub norms_file: ManifestFile,
}

fn entry(name: &str, bytes: &[u8]) -> ManifestFile {
    ManifestFile {
        name: name.to_string(),
        bytes: bytes.len() as u64,
        crc32: crc32fast::hash(bytes),
    }
}

/// Writes `model` under `dir`. `config.model` must carry the input geometry
/// the model was built with.
pub fn save_checkpoint(
    dir: &Path,
    model: &Model<f32>,
    config: &TrainConfig,
    target_subject_id: &str,
    best_epoch: usize,
) -> Result<Checkpoint> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let params: Vec<u8> = model
        .params()
        .iter()
        .flat_map(|p| p.value.data().iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    let norms: Vec<u8> = model
        .norms()
        .iter()
        .flat_map(|n| n.running_mean.iter().chain(&n.running_var).flat_map(|v| v.to_le_bytes()))
        .collect();
    for (name, bytes) in [(PARAMS, &params), (NORMS, &norms)] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    let mut config = config.clone();
    config.model = model.config().clone();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        target_subject_id: target_subject_id.to_string(),
        seed: config.seed,
        best_epoch,
        config,
        params: model
            .params()
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        norm_channels: model.norms().iter().map(|n| n.channels()).collect(),
        params_file: entry(PARAMS, &params),
        norms_file: entry(NORMS, &norms),
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&ckpt).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(ckpt)
}

fn read_checked(dir: &Path, f: &ManifestFile) -> Result<Vec<u8>> {
    let path = dir.join(&f.name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let actual = crc32fast::hash(&bytes);
    if actual != f.crc32 {
        return Err(Error::ChecksumMismatch {
            file: f.name.clone(),
            expected: f.crc32,
            actual,
        });
    }
    if bytes.len() as u64 != f.bytes {
        return Err(Error::PayloadShape {
            file: f.name.clone(),
            reason: format!("{} bytes, manifest says {}", bytes.len(), f.bytes),
        });
    }
    Ok(bytes)
}

/// Rebuilds the model recorded under `dir`, in eval mode.
pub fn load_checkpoint(dir: &Path) -> Result<(Checkpoint, Model<f32>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidBundle(format!(
            "unsupported checkpoint format {} v{}",
            ckpt.format, ckpt.version
        )));
    }
    // Initialization is overwritten below; the seed only fixes the layout.
    let mut model = Model::<f32>::new(&ckpt.config.model, &mut ChaCha8Rng::seed_from_u64(0))?;
    let layout_ok = model.params().len() == ckpt.params.len()
        && model
            .params()
            .iter()
            .zip(&ckpt.params)
            .all(|(p, e)| p.name == e.name && p.value.shape() == e.shape.as_slice())
        && model.norms().iter().map(|n| n.channels()).eq(ckpt.norm_channels.iter().copied());
    if !layout_ok {
        return Err(Error::PayloadShape {
            file: MANIFEST.to_string(),
            reason: format!("parameter table does not match {}", ckpt.config.model.display_name()),
        });
    }
    let params = read_checked(dir, &ckpt.params_file)?;
    let want: usize = model.params().iter().map(|p| p.value.len() * 4).sum();
    if params.len() != want {
        return Err(Error::PayloadShape {
            file: PARAMS.to_string(),
            reason: format!("{} bytes, expected {want}", params.len()),
        });
    }
    let mut values = params.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v = values.next().expect("length checked");
        }
    }
    let norms = read_checked(dir, &ckpt.norms_file)?;
    let want: usize = model.norms().iter().map(|n| n.channels() * 16).sum();
    if norms.len() != want {
        return Err(Error::PayloadShape {
            file: NORMS.to_string(),
            reason: format!("{} bytes, expected {want}", norms.len()),
        });
    }
    let mut values = norms.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for n in model.norms_mut() {
        for v in n.running_mean.iter_mut().chain(n.running_var.iter_mut()) {
            *v = values.next().expect("length checked");
        }
    }
    model.set_mode(crate::nn::Mode::Eval);
    Ok((ckpt, model))
}

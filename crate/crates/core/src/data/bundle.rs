//! Directory container:
//!
//! ```text
//! manifest.json        geometry, class names, subjects, CRC-32 per payload
//! subject_<id>.sig     f32 LE [n_trials, channels, timesteps], C order
//! subject_<id>.lab     u8 per trial, 0 alert / 1 drowsy
//! subject_<id>.rt      f32 LE reaction time per trial, seconds
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{valid_subject_id, DatasetBundle, Label, SubjectRecord, Trial};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "eegmix-bundle";
pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub bytes: u64,
    pub crc32: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSubject {
    pub id: String,
    pub trials: usize,
    pub signal: ManifestFile,
    pub labels: ManifestFile,
    pub reaction_times: ManifestFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub rate_hz: u32,
    pub window_seconds: u32,
    pub channels: usize,
    pub timesteps: usize,
    pub class_names: Vec<String>,
    pub subjects: Vec<ManifestSubject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

fn file_entry(name: String, bytes: &[u8]) -> ManifestFile {
    ManifestFile {
        name,
        bytes: bytes.len() as u64,
        crc32: crc32fast::hash(bytes),
    }
}

fn encode_subject(s: &SubjectRecord) -> [(String, Vec<u8>); 3] {
    let id = &s.subject_id;
    let sig = s
        .trials
        .iter()
        .flat_map(|t| t.signal.iter().flat_map(|v| v.to_le_bytes()))
        .collect();
    let lab = s.trials.iter().map(|t| t.label as u8).collect();
    let rt = s.trials.iter().flat_map(|t| t.rt_seconds.to_le_bytes()).collect();
    [
        (format!("subject_{id}.sig"), sig),
        (format!("subject_{id}.lab"), lab),
        (format!("subject_{id}.rt"), rt),
    ]
}

/// Writes `bundle` into directory `dir`, creating it if needed. The output
/// bytes depend only on the bundle.
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<Manifest> {
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut subjects = Vec::with_capacity(bundle.subjects.len());
    for s in &bundle.subjects {
        let [sig, lab, rt] = encode_subject(s);
        let mut entries = Vec::with_capacity(3);
        for (name, bytes) in [sig, lab, rt] {
            let path = dir.join(&name);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(file_entry(name, &bytes));
        }
        let [signal, labels, reaction_times]: [ManifestFile; 3] = entries.try_into().expect("three payloads");
        subjects.push(ManifestSubject {
            id: s.subject_id.clone(),
            trials: s.trials.len(),
            signal,
            labels,
            reaction_times,
        });
    }
    let manifest = Manifest {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        rate_hz: bundle.rate_hz,
        window_seconds: bundle.window_seconds,
        channels: bundle.channels,
        timesteps: bundle.timesteps(),
        class_names: bundle.class_names.clone(),
        subjects,
        generator: bundle.generator.clone(),
    };
    let path = dir.join(MANIFEST);
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

fn read_payload(dir: &Path, entry: &ManifestFile, subject: &str) -> Result<Vec<u8>> {
    let expected_name = |suffix: &str| format!("subject_{subject}.{suffix}");
    if !["sig", "lab", "rt"].iter().any(|s| entry.name == expected_name(s)) {
        return Err(Error::InvalidBundle(format!(
            "payload name `{}` does not belong to subject `{subject}`",
            entry.name
        )));
    }
    let path = dir.join(&entry.name);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let actual = crc32fast::hash(&bytes);
    if actual != entry.crc32 {
        return Err(Error::ChecksumMismatch {
            file: entry.name.clone(),
            expected: entry.crc32,
            actual,
        });
    }
    Ok(bytes)
}

fn expect_len(file: &str, bytes: &[u8], expected: usize, what: &str) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::PayloadShape {
            file: file.to_string(),
            reason: format!("{} bytes, expected {expected} ({what})", bytes.len()),
        });
    }
    Ok(())
}

fn f32_le(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

/// Reads and fully validates a bundle directory.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if m.format != FORMAT_NAME || m.version != FORMAT_VERSION {
        return Err(Error::InvalidBundle(format!(
            "unsupported format {} v{} (expected {FORMAT_NAME} v{FORMAT_VERSION})",
            m.format, m.version
        )));
    }
    if m.timesteps != (m.rate_hz * m.window_seconds) as usize {
        return Err(Error::InvalidBundle(format!(
            "timesteps {} is not rate {} Hz × {} s",
            m.timesteps, m.rate_hz, m.window_seconds
        )));
    }
    let trial_len = m.channels * m.timesteps;
    let mut seen = std::collections::HashSet::new();
    let mut subjects = Vec::with_capacity(m.subjects.len());
    for ms in &m.subjects {
        if !valid_subject_id(&ms.id) {
            return Err(Error::InvalidBundle(format!("bad subject id `{}`", ms.id)));
        }
        if !seen.insert(ms.id.clone()) {
            return Err(Error::DuplicateSubject(ms.id.clone()));
        }
        let sig = read_payload(dir, &ms.signal, &ms.id)?;
        let lab = read_payload(dir, &ms.labels, &ms.id)?;
        let rt = read_payload(dir, &ms.reaction_times, &ms.id)?;
        let n = ms.trials;
        expect_len(
            &ms.signal.name,
            &sig,
            n * trial_len * 4,
            &format!("{n} trials × {} channels × {} timesteps × f32", m.channels, m.timesteps),
        )?;
        expect_len(&ms.labels.name, &lab, n, &format!("{n} trials × u8"))?;
        expect_len(&ms.reaction_times.name, &rt, n * 4, &format!("{n} trials × f32"))?;

        let signals: Vec<f32> = f32_le(&sig).collect();
        let trials = lab
            .iter()
            .zip(f32_le(&rt))
            .zip(signals.chunks_exact(trial_len))
            .map(|((&b, rt_seconds), signal)| {
                let label = Label::from_byte(b).ok_or_else(|| Error::UnknownLabel {
                    subject: ms.id.clone(),
                    value: b,
                })?;
                Ok(Trial {
                    signal: signal.to_vec(),
                    label,
                    rt_seconds,
                    subject_id: ms.id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        subjects.push(SubjectRecord {
            subject_id: ms.id.clone(),
            trials,
        });
    }
    let bundle = DatasetBundle {
        subjects,
        rate_hz: m.rate_hz,
        window_seconds: m.window_seconds,
        channels: m.channels,
        class_names: m.class_names,
        generator: m.generator,
    };
    bundle.validate()?;
    Ok(bundle)
}

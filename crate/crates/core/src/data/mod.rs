//! Trial containers, the on-disk bundle format, subject-wise splits and
//! balanced batch sampling.

mod bundle;
mod sampler;
mod split;
mod synth;

pub use bundle::{load_bundle, save_bundle, Manifest, ManifestFile, ManifestSubject, FORMAT_NAME, FORMAT_VERSION};
pub use sampler::{gather, BalancedSampler, Batch, Cell};
pub use split::{loso_split, val_count, SplitSpec, TrialRef};
pub use synth::{alpha_bandpower, generate_synthetic, SynthConfig};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLASS_NAMES: [&str; 2] = ["alert", "drowsy"];
pub const DEFAULT_RATE_HZ: u32 = 128;
pub const DEFAULT_WINDOW_SECONDS: u32 = 3;
pub const DEFAULT_CHANNELS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Alert = 0,
    Drowsy = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Alert, Label::Drowsy];

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::Alert),
            1 => Some(Label::Drowsy),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_positive(self) -> bool {
        self == Label::Drowsy
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(CLASS_NAMES[self.index()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// `[channels, timesteps]`, row-major.
    pub signal: Vec<f32>,
    pub label: Label,
    pub rt_seconds: f32,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub trials: Vec<Trial>,
}

impl SubjectRecord {
    pub fn count(&self, label: Label) -> usize {
        self.trials.iter().filter(|t| t.label == label).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub subjects: Vec<SubjectRecord>,
    pub rate_hz: u32,
    pub window_seconds: u32,
    pub channels: usize,
    pub class_names: Vec<String>,
    /// Generator arguments for synthetic bundles, echoed into the manifest.
    pub generator: Option<serde_json::Value>,
}

impl DatasetBundle {
    pub fn timesteps(&self) -> usize {
        (self.rate_hz * self.window_seconds) as usize
    }

    pub fn trial_len(&self) -> usize {
        self.channels * self.timesteps()
    }

    pub fn n_trials(&self) -> usize {
        self.subjects.iter().map(|s| s.trials.len()).sum()
    }

    pub fn count(&self, label: Label) -> usize {
        self.subjects.iter().map(|s| s.count(label)).sum()
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        self.subjects.iter().map(|s| s.subject_id.as_str()).collect()
    }

    pub fn subject(&self, id: &str) -> Result<(usize, &SubjectRecord)> {
        self.subjects
            .iter()
            .enumerate()
            .find(|(_, s)| s.subject_id == id)
            .ok_or_else(|| Error::UnknownSubject(id.to_string()))
    }

    pub fn trial(&self, r: TrialRef) -> &Trial {
        &self.subjects[r.subject].trials[r.trial]
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidBundle(m));
        if self.subjects.is_empty() {
            return bad("no subjects".into());
        }
        if self.channels == 0 || self.timesteps() == 0 {
            return bad("zero channels or timesteps".into());
        }
        if self.class_names != CLASS_NAMES {
            return bad(format!("class names must be {CLASS_NAMES:?}, got {:?}", self.class_names));
        }
        let mut seen = HashSet::new();
        for s in &self.subjects {
            if !valid_subject_id(&s.subject_id) {
                return bad(format!("subject id `{}` must be non-empty ASCII [A-Za-z0-9_-]", s.subject_id));
            }
            if !seen.insert(s.subject_id.as_str()) {
                return Err(Error::DuplicateSubject(s.subject_id.clone()));
            }
            if s.trials.is_empty() {
                return bad(format!("subject `{}` has no trials", s.subject_id));
            }
            for (i, t) in s.trials.iter().enumerate() {
                if t.subject_id != s.subject_id {
                    return bad(format!("trial {i} of `{}` is tagged `{}`", s.subject_id, t.subject_id));
                }
                if t.signal.len() != self.trial_len() {
                    return Err(Error::PayloadShape {
                        file: format!("subject {}", s.subject_id),
                        reason: format!("trial {i} has {} samples, expected {}", t.signal.len(), self.trial_len()),
                    });
                }
                if !t.signal.iter().all(|v| v.is_finite()) {
                    return bad(format!("trial {i} of `{}` has a non-finite sample", s.subject_id));
                }
                if !(t.rt_seconds.is_finite() && t.rt_seconds > 0.0) {
                    return bad(format!("trial {i} of `{}` has reaction time {}", s.subject_id, t.rt_seconds));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn valid_subject_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

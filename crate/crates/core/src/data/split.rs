use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetBundle;
use crate::error::Result;

/// Index of a trial inside a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialRef {
    pub subject: usize,
    pub trial: usize,
}

/// One leave-one-subject-out fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub target_subject_id: String,
    pub target: usize,
    pub train: Vec<TrialRef>,
    pub val: Vec<TrialRef>,
    pub test: Vec<TrialRef>,
    pub seed: u64,
}

/// Validation trials taken from a subject with `n` trials: 10 %, rounded
/// half up, at least one.
pub fn val_count(n: usize) -> usize {
    ((n + 5) / 10).max(1)
}

/// Holds out every trial of `target` for testing and splits each remaining
/// subject 90/10 into train and validation.
pub fn loso_split(bundle: &DatasetBundle, target: &str, seed: u64) -> Result<SplitSpec> {
    let (target_idx, record) = bundle.subject(target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (si, s) in bundle.subjects.iter().enumerate() {
        if si == target_idx {
            continue;
        }
        let mut idx: Vec<usize> = (0..s.trials.len()).collect();
        idx.shuffle(&mut rng);
        let k = val_count(idx.len());
        let mut v: Vec<usize> = idx[..k].to_vec();
        let mut t: Vec<usize> = idx[k..].to_vec();
        v.sort_unstable();
        t.sort_unstable();
        val.extend(v.into_iter().map(|trial| TrialRef { subject: si, trial }));
        train.extend(t.into_iter().map(|trial| TrialRef { subject: si, trial }));
    }
    let test = (0..record.trials.len())
        .map(|trial| TrialRef {
            subject: target_idx,
            trial,
        })
        .collect();
    Ok(SplitSpec {
        target_subject_id: target.to_string(),
        target: target_idx,
        train,
        val,
        test,
        seed,
    })
}

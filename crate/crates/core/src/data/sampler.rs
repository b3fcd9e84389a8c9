use rand::Rng;

use super::{DatasetBundle, Label, TrialRef};
use crate::error::{Error, Result};
use crate::nn::one_hot;
use crate::tensor::Tensor;

/// Training trials of one subject and one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub subject: usize,
    pub label: Label,
    pub trials: Vec<TrialRef>,
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, C, T]`
    pub x: Tensor<f32>,
    /// One-hot `[B, 2]`
    pub y: Tensor<f32>,
    pub refs: Vec<TrialRef>,
}

/// Stacks the referenced trials into a batch.
pub fn gather(bundle: &DatasetBundle, refs: &[TrialRef]) -> Result<Batch> {
    if refs.is_empty() {
        return Err(Error::EmptySplit("batch"));
    }
    let mut data = Vec::with_capacity(refs.len() * bundle.trial_len());
    let mut classes = Vec::with_capacity(refs.len());
    for &r in refs {
        let t = bundle.trial(r);
        data.extend_from_slice(&t.signal);
        classes.push(t.label.index());
    }
    Ok(Batch {
        x: Tensor::new(vec![refs.len(), bundle.channels, bundle.timesteps()], data)?,
        y: one_hot(&classes, 2),
        refs: refs.to_vec(),
    })
}

/// Draws batches that are balanced across subjects and classes: each
/// element picks a non-empty (subject, class) cell uniformly, then a trial
/// uniformly inside it, with replacement.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    cells: Vec<Cell>,
    warnings: Vec<String>,
    batch_size: usize,
    n_trials: usize,
}

impl BalancedSampler {
    pub fn new(bundle: &DatasetBundle, train: &[TrialRef], batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if train.is_empty() {
            return Err(Error::EmptySplit("train"));
        }
        let mut subjects: Vec<usize> = train.iter().map(|r| r.subject).collect();
        subjects.sort_unstable();
        subjects.dedup();
        let mut cells = Vec::new();
        let mut warnings = Vec::new();
        for &s in &subjects {
            for label in Label::ALL {
                let trials: Vec<TrialRef> = train
                    .iter()
                    .copied()
                    .filter(|r| r.subject == s && bundle.trial(*r).label == label)
                    .collect();
                if trials.is_empty() {
                    warnings.push(format!(
                        "subject `{}` has no {label} trials in the training split; cell excluded",
                        bundle.subjects[s].subject_id
                    ));
                } else {
                    cells.push(Cell {
                        subject: s,
                        label,
                        trials,
                    });
                }
            }
        }
        Ok(BalancedSampler {
            cells,
            warnings,
            batch_size,
            n_trials: train.len(),
        })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// One message per excluded empty cell.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Batches per epoch, `⌈N_train / batch_size⌉`.
    pub fn epoch_len(&self) -> usize {
        self.n_trials.div_ceil(self.batch_size)
    }

    /// Index of the chosen cell and the trial drawn from it.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, TrialRef) {
        let c = rng.random_range(0..self.cells.len());
        let cell = &self.cells[c];
        (c, cell.trials[rng.random_range(0..cell.trials.len())])
    }

    pub fn next_batch<R: Rng + ?Sized>(&self, bundle: &DatasetBundle, rng: &mut R) -> Result<Batch> {
        let refs: Vec<TrialRef> = (0..self.batch_size).map(|_| self.draw(rng).1).collect();
        gather(bundle, &refs)
    }
}

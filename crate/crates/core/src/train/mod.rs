//! Training loop with augmentation hooks, validation-F1 early stopping, and
//! the leave-one-subject-out driver.

mod adam;
mod checkpoint;
mod loso;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};
pub use loso::{run_fold, run_loso, FoldResult, LosoResult};

use std::collections::HashSet;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{batch_hooks, MixParams};
use crate::autodiff::Tape;
use crate::data::{gather, BalancedSampler, DatasetBundle, SplitSpec, TrialRef};
use crate::error::{Error, Result};
use crate::metrics::{confusion, precision_recall_f1, THRESHOLD};
use crate::model::{Model, ModelConfig, TapHook, INPUT_TAP};
use crate::nn::{softmax, softmax_cross_entropy, Mode};
use crate::tensor::Tensor;

pub const DEFAULT_BATCH_SIZE: usize = 50;
pub const DEFAULT_MAX_EPOCHS: usize = 50;
pub const SYNTHETIC_MAX_EPOCHS: usize = 40;
pub const DEFAULT_PATIENCE: usize = 10;
/// Trials per forward pass when scoring.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub mix: MixParams,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_max_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}
fn default_patience() -> usize {
    DEFAULT_PATIENCE
}

impl TrainConfig {
    pub fn new(model: ModelConfig, mix: MixParams, seed: u64) -> Self {
        TrainConfig {
            model,
            mix,
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if self.patience > self.max_epochs {
            return bad(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            ));
        }
        self.model.validate()?;
        self.mix.validate()?;
        self.adam.validate()
    }
}

/// Independent random streams of one fold. Each consumer owns its stream,
/// so switching augmentation on or off leaves the others untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Sampler = 2,
    Dropout = 3,
    Augment = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl RoleCounts {
    fn bump(&mut self, role: Role, n: usize) {
        match role {
            Role::Train => self.train += n,
            Role::Val => self.val += n,
            Role::Test => self.test += n,
        }
    }
}

/// Trial forwards per role, split by model mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardAudit {
    pub train_mode: RoleCounts,
    pub eval_mode: RoleCounts,
}

/// Classifies trials of one split by role.
#[derive(Debug, Clone)]
pub struct RoleMap {
    target: usize,
    val: HashSet<TrialRef>,
}

impl RoleMap {
    pub fn new(split: &SplitSpec) -> Self {
        RoleMap {
            target: split.target,
            val: split.val.iter().copied().collect(),
        }
    }

    pub fn role(&self, r: TrialRef) -> Role {
        if r.subject == self.target {
            Role::Test
        } else if self.val.contains(&r) {
            Role::Val
        } else {
            Role::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the restored snapshot.
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

/// Everything mutable during one fit.
pub struct Trainer<'a> {
    pub model: Model<f32>,
    pub adam: AdamState<f32>,
    pub config: &'a TrainConfig,
    pub bundle: &'a DatasetBundle,
    pub roles: RoleMap,
    pub audit: ForwardAudit,
    sampler_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    augment_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &'a TrainConfig, bundle: &'a DatasetBundle, split: &SplitSpec) -> Result<Self> {
        config.validate()?;
        let model_cfg = config
            .model
            .clone()
            .with_input(bundle.channels, bundle.timesteps());
        let mut init = stream_rng(config.seed, Stream::Init);
        let model = Model::<f32>::new(&model_cfg, &mut init)?;
        let taps = model.tap_names();
        for tap in &config.mix.placement {
            if tap != INPUT_TAP && !taps.contains(tap) {
                let mut available = vec![INPUT_TAP.to_string()];
                available.extend(taps.iter().cloned());
                return Err(Error::UnknownTap {
                    name: tap.clone(),
                    available,
                });
            }
        }
        let adam = AdamState::new(config.adam, model.params());
        Ok(Trainer {
            model,
            adam,
            config,
            bundle,
            roles: RoleMap::new(split),
            audit: ForwardAudit::default(),
            sampler_rng: stream_rng(config.seed, Stream::Sampler),
            dropout_rng: stream_rng(config.seed, Stream::Dropout),
            augment_rng: stream_rng(config.seed, Stream::Augment),
        })
    }

    fn record(&mut self, refs: &[TrialRef], mode: Mode) {
        for &r in refs {
            let role = self.roles.role(r);
            match mode {
                Mode::Train => self.audit.train_mode.bump(role, 1),
                Mode::Eval => self.audit.eval_mode.bump(role, 1),
            }
        }
    }

    /// One optimizer step on a batch; returns the batch loss.
    pub fn train_step(&mut self, x: &Tensor<f32>, y: &Tensor<f32>, refs: &[TrialRef]) -> Result<f64> {
        if refs.iter().any(|&r| self.roles.role(r) != Role::Train) {
            return Err(Error::InvalidArgument("training batch contains a non-training trial".into()));
        }
        self.record(refs, Mode::Train);
        self.model.set_mode(Mode::Train);
        let mut tape = Tape::new();
        let params = self.model.bind(&mut tape, true);
        let xv = tape.constant(x.clone());
        let mut hooks = batch_hooks::<f32>(&self.config.mix, refs.len(), &mut self.augment_rng)?;
        let mut hook_refs: Vec<&mut dyn TapHook<f32>> = hooks.iter_mut().map(|h| h.as_mut() as &mut dyn TapHook<f32>).collect();
        let out = self.model.forward(
            &mut tape,
            &params,
            xv,
            &mut hook_refs,
            Some(y.clone()),
            &mut self.dropout_rng,
        )?;
        let labels = out.labels.expect("labels pass through forward");
        let loss = softmax_cross_entropy(&mut tape, out.logits, &labels)?;
        let loss_value = tape.value(loss).item() as f64;
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        tape.backward(loss)?;
        let grads: Vec<Vec<f32>> = params
            .iter()
            .map(|&p| tape.take_grad(p).expect("parameters require grad"))
            .collect();
        self.adam.step(self.model.params_mut(), &grads)?;
        Ok(loss_value)
    }

    /// One epoch of `⌈N_train / batch_size⌉` balanced batches; returns the
    /// mean batch loss.
    pub fn train_epoch(&mut self, sampler: &BalancedSampler) -> Result<f64> {
        let mut total = 0.0;
        let n = sampler.epoch_len();
        for _ in 0..n {
            let batch = sampler.next_batch(self.bundle, &mut self.sampler_rng)?;
            total += self.train_step(&batch.x, &batch.y, &batch.refs)?;
        }
        Ok(total / n as f64)
    }

    /// Eval-mode scores over `refs`; see [`score_refs`].
    pub fn score(&mut self, refs: &[TrialRef]) -> Result<(Vec<f64>, f64)> {
        if refs.iter().any(|&r| self.roles.role(r) == Role::Test) {
            return Err(Error::InvalidArgument("held-out trials cannot be scored during training".into()));
        }
        self.record(refs, Mode::Eval);
        score_refs(&mut self.model, self.bundle, refs)
    }
}

/// Eval-mode drowsy probabilities and mean cross-entropy over `refs`.
pub fn score_refs(model: &mut Model<f32>, bundle: &DatasetBundle, refs: &[TrialRef]) -> Result<(Vec<f64>, f64)> {
    if refs.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let mut scores = Vec::with_capacity(refs.len());
    let mut loss_sum = 0.0;
    for chunk in refs.chunks(EVAL_CHUNK) {
        let batch = gather(bundle, chunk)?;
        let logits = model.predict(&batch.x)?;
        if !logits.all_finite() {
            return Err(Error::NonFinite("evaluation logits".into()));
        }
        let probs = softmax(&logits);
        for (p, y) in probs.data().chunks_exact(2).zip(batch.y.data().chunks_exact(2)) {
            scores.push(p[1] as f64);
            let k = usize::from(y[1] > 0.5);
            loss_sum -= (p[k] as f64).max(1e-12).ln();
        }
    }
    Ok((scores, loss_sum / refs.len() as f64))
}

pub fn labels_of(bundle: &DatasetBundle, refs: &[TrialRef]) -> Vec<bool> {
    refs.iter().map(|&r| bundle.trial(r).label.is_positive()).collect()
}

/// F1 in `[0, 1]` at the fixed decision threshold.
pub fn f1_score(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(precision_recall_f1(&confusion(scores, labels, THRESHOLD)?).2)
}

pub struct FitOutput {
    pub model: Model<f32>,
    pub history: TrainHistory,
    pub audit: ForwardAudit,
}

/// Trains on `split.train`, selects the epoch with the highest validation
/// F1 (earliest on ties) and stops after `patience` epochs without a strict
/// improvement.
pub fn fit(config: &TrainConfig, split: &SplitSpec, bundle: &DatasetBundle) -> Result<FitOutput> {
    if split.val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let start = Instant::now();
    let mut trainer = Trainer::new(config, bundle, split)?;
    let sampler = BalancedSampler::new(bundle, &split.train, config.batch_size)?;
    for w in sampler.warnings() {
        log::warn!("fold {}: {w}", split.target_subject_id);
    }
    let val_labels = labels_of(bundle, &split.val);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    for epoch in 0..config.max_epochs {
        let train_loss = trainer.train_epoch(&sampler)?;
        let (scores, val_loss) = trainer.score(&split.val)?;
        let val_f1 = f1_score(&scores, &val_labels)?;
        log::info!(
            "fold {} epoch {:>3}: train loss {train_loss:.4}, val loss {val_loss:.4}, val F1 {val_f1:.4}",
            split.target_subject_id,
            epoch + 1
        );
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_f1,
        });
        if best.as_ref().is_none_or(|b| val_f1 > b.1) {
            best = Some((epoch, val_f1, trainer.model.clone()));
        }
        let best_epoch = best.as_ref().expect("set above").0;
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    let (best_epoch, _, mut model) = best.expect("at least one epoch");
    model.set_mode(Mode::Eval);
    Ok(FitOutput {
        model,
        history: TrainHistory {
            epochs,
            best_epoch,
            wall_seconds: start.elapsed().as_secs_f64(),
        },
        audit: trainer.audit,
    })
}

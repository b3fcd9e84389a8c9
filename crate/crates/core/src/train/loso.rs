use rayon::prelude::*;

use super::{fit, labels_of, score_refs, ForwardAudit, TrainConfig, TrainHistory};
use crate::data::{loso_split, DatasetBundle, SplitSpec};
use crate::error::{Error, Result};
use crate::metrics::{ExperimentReport, FoldFailure, MetricsRow};
use crate::model::Model;

/// Outcome of one held-out subject.
pub struct FoldResult {
    pub index: usize,
    pub split: SplitSpec,
    pub config: TrainConfig,
    pub model: Model<f32>,
    pub history: TrainHistory,
    pub audit: ForwardAudit,
    pub row: MetricsRow,
}

pub struct LosoResult {
    pub report: ExperimentReport,
    pub folds: Vec<FoldResult>,
}

/// Trains with subject `index` held out, using seed `base + index`, then
/// scores the held-out subject.
pub fn run_fold(config: &TrainConfig, bundle: &DatasetBundle, index: usize) -> Result<FoldResult> {
    let id = bundle
        .subjects
        .get(index)
        .ok_or_else(|| Error::UnknownSubject(format!("fold index {index}")))?
        .subject_id
        .clone();
    let mut config = config.clone();
    config.seed = config.seed.wrapping_add(index as u64);
    let split = loso_split(bundle, &id, config.seed)?;
    let out = fit(&config, &split, bundle)?;
    let mut audit = out.audit;
    if audit.train_mode.test != 0 || audit.eval_mode.test != 0 {
        return Err(Error::InvalidArgument(format!(
            "held-out subject {id} was forwarded during training"
        )));
    }
    let mut model = out.model;
    let (scores, _) = score_refs(&mut model, bundle, &split.test)?;
    audit.eval_mode.test += split.test.len();
    let row = MetricsRow::from_scores(&id, &scores, &labels_of(bundle, &split.test))?;
    log::info!(
        "fold {id}: test F1 {:.2}, best epoch {} of {}",
        row.f1,
        out.history.best_epoch + 1,
        out.history.epochs.len()
    );
    config.model = model.config().clone();
    Ok(FoldResult {
        index,
        split,
        config,
        model,
        history: out.history,
        audit,
        row,
    })
}

/// Leave-one-subject-out over every subject of `bundle`, at most `jobs`
/// folds at a time. A failing fold becomes a report failure entry instead
/// of aborting the others.
pub fn run_loso(config: &TrainConfig, bundle: &DatasetBundle, jobs: usize) -> Result<LosoResult> {
    config.validate()?;
    bundle.validate()?;
    if bundle.subjects.len() < 3 {
        return Err(Error::InvalidBundle(format!(
            "leave-one-subject-out needs at least 3 subjects, got {}",
            bundle.subjects.len()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<FoldResult>> = pool.install(|| {
        (0..bundle.subjects.len())
            .into_par_iter()
            .map(|i| run_fold(config, bundle, i))
            .collect()
    });
    let mut folds = Vec::new();
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(f) => folds.push(f),
            Err(e) => {
                log::error!("fold {}: {e}", bundle.subjects[i].subject_id);
                failures.push(FoldFailure {
                    subject_id: bundle.subjects[i].subject_id.clone(),
                    class: e.class(),
                    error: e.to_string(),
                });
            }
        }
    }
    let rows = folds.iter().map(|f| f.row.clone()).collect();
    let echo = serde_json::to_value(config).expect("config serializes");
    let report = ExperimentReport::new(&config.model, &config.mix, config.seed, rows, failures, echo);
    Ok(LosoResult { report, folds })
}

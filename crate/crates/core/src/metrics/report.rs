use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{aggregate_mean_std, auroc, confusion, precision_recall_f1, ConfusionCounts, THRESHOLD};
use crate::augment::{Method, MixParams};
use crate::error::{Error, ErrorClass, Result};
use crate::model::ModelConfig;

/// Test metrics for one held-out subject, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub subject_id: String,
    pub f1: f64,
    /// `None` when the subject has trials of one class only.
    pub auroc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub counts: ConfusionCounts,
}

impl MetricsRow {
    /// `scores` are drowsy probabilities, `labels` true for drowsy.
    pub fn from_scores(subject_id: &str, scores: &[f64], labels: &[bool]) -> Result<Self> {
        let counts = confusion(scores, labels, THRESHOLD)?;
        let (p, r, f1) = precision_recall_f1(&counts);
        let auc = match auroc(scores, labels) {
            Ok(a) => Some(100.0 * a),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsRow {
            subject_id: subject_id.to_string(),
            f1: 100.0 * f1,
            auroc: auc,
            precision: 100.0 * p,
            recall: 100.0 * r,
            counts,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        aggregate_mean_std(values).ok().map(|(mean, std)| MeanStd { mean, std })
    }

    pub fn cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub f1: Option<MeanStd>,
    /// Over the subjects whose AUROC is defined.
    pub auroc: Option<MeanStd>,
    pub precision: Option<MeanStd>,
    pub recall: Option<MeanStd>,
}

impl Aggregate {
    pub fn of(rows: &[MetricsRow]) -> Self {
        let col = |f: fn(&MetricsRow) -> f64| MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>());
        Aggregate {
            f1: col(|r| r.f1),
            auroc: MeanStd::of(&rows.iter().filter_map(|r| r.auroc).collect::<Vec<_>>()),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldFailure {
    pub subject_id: String,
    pub class: ErrorClass,
    pub error: String,
}

/// Per-subject rows of one LOSO experiment plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub model: String,
    pub method: Method,
    pub placement: Vec<String>,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FoldFailure>,
    /// The configuration that produced the report.
    pub config: serde_json::Value,
}

/// Row label: the model name for the baseline, otherwise the method, with
/// MixStyle naming its block placement, e.g. `MixStyle(1234)`.
pub fn method_label(model: &ModelConfig, mix: &MixParams) -> String {
    match mix.method {
        Method::None => model.display_name(),
        Method::Mixup => "Mixup".into(),
        Method::ManifoldMixup => "Manifold Mixup".into(),
        Method::MixStyle => {
            let blocks: Option<Vec<u32>> = mix
                .placement
                .iter()
                .map(|t| t.strip_prefix("block").and_then(|n| n.parse().ok()))
                .collect();
            match blocks {
                Some(mut b) => {
                    b.sort_unstable();
                    b.dedup();
                    format!("MixStyle({})", b.iter().map(|n| n.to_string()).collect::<String>())
                }
                None => format!("MixStyle({})", mix.placement.join(",")),
            }
        }
    }
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

impl ExperimentReport {
    pub fn new(
        model: &ModelConfig,
        mix: &MixParams,
        seed: u64,
        rows: Vec<MetricsRow>,
        failures: Vec<FoldFailure>,
        config: serde_json::Value,
    ) -> Self {
        ExperimentReport {
            label: method_label(model, mix),
            model: model.display_name(),
            method: mix.method,
            placement: mix.placement.clone(),
            seed,
            aggregate: Aggregate::of(&rows),
            rows,
            failures,
            config,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("not a report: {e}")))
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        self.rows.iter().map(|r| r.subject_id.as_str()).collect()
    }

    /// CSV with one row per subject followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["subject", "f1", "auroc", "precision", "recall", "tp", "fp", "tn", "fn"])
            .expect("in-memory write");
        for r in &self.rows {
            let c = r.counts;
            w.write_record([
                r.subject_id.clone(),
                pct(r.f1),
                r.auroc.map(pct).unwrap_or_default(),
                pct(r.precision),
                pct(r.recall),
                c.tp.to_string(),
                c.fp.to_string(),
                c.tn.to_string(),
                c.fn_.to_string(),
            ])
            .expect("in-memory write");
        }
        let a = &self.aggregate;
        for (name, pick) in [("mean", true), ("std", false)] {
            let cell = |m: Option<MeanStd>| m.map(|m| pct(if pick { m.mean } else { m.std })).unwrap_or_default();
            w.write_record([
                name.to_string(),
                cell(a.f1),
                cell(a.auroc),
                cell(a.precision),
                cell(a.recall),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Plain-text table: one line per subject, then the Avg.±Std. line.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} ({}, seed {})", self.label, self.model, self.seed).unwrap();
        let width = self.rows.iter().map(|r| r.subject_id.len()).max().unwrap_or(0).max(10);
        writeln!(
            out,
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}",
            "Subject", "F1-score", "AUROC", "Precision", "Recall"
        )
        .unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}",
                r.subject_id,
                pct(r.f1),
                r.auroc.map(pct).unwrap_or_else(|| "n/a".into()),
                pct(r.precision),
                pct(r.recall)
            )
            .unwrap();
        }
        let cell = |m: Option<MeanStd>| m.map(|m| m.cell()).unwrap_or_else(|| "n/a".into());
        let a = &self.aggregate;
        writeln!(
            out,
            "{:<width$}  {:>13}  {:>13}  {:>13}  {:>13}",
            "Avg.±Std.",
            cell(a.f1),
            cell(a.auroc),
            cell(a.precision),
            cell(a.recall)
        )
        .unwrap();
        for f in &self.failures {
            writeln!(out, "fold {} failed: {}", f.subject_id, f.error).unwrap();
        }
        out
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// F1 table across experiments: one row per report, one column per subject,
/// and the aggregate with its change against the first row, e.g.
/// `68.41±15.28 (+3.74)`.
pub fn compare_table(reports: &[ExperimentReport]) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to compare".into()))?;
    let subjects = first.subject_ids();
    for r in &reports[1..] {
        if r.subject_ids() != subjects {
            return Err(Error::InvalidArgument(format!(
                "`{}` covers subjects {:?}, `{}` covers {:?}",
                r.label,
                r.subject_ids(),
                first.label,
                subjects
            )));
        }
    }
    let base = first.aggregate.f1.map(|m| round2(m.mean));
    let label_w = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    write!(out, "{:<label_w$}", "Method").unwrap();
    for s in &subjects {
        write!(out, "  {:>7}", s).unwrap();
    }
    writeln!(out, "  Avg. F1-score±Std.").unwrap();
    for r in reports {
        write!(out, "{:<label_w$}", r.label).unwrap();
        for row in &r.rows {
            write!(out, "  {:>7}", pct(row.f1)).unwrap();
        }
        let agg = match r.aggregate.f1 {
            Some(m) => {
                let mut cell = m.cell();
                if let (Some(b), false) = (base, std::ptr::eq(r, first)) {
                    write!(cell, " ({:+.2})", round2(m.mean) - b).unwrap();
                }
                cell
            }
            None => "n/a".into(),
        };
        writeln!(out, "  {agg}").unwrap();
    }
    Ok(out)
}

//! `eegmix` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric failure.

pub mod experiment;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use eegmix_core::data::{generate_synthetic, save_bundle, SynthConfig};
use eegmix_core::gradcheck::{catalog, corrupted_case, run_cases};
use eegmix_core::metrics::{compare_table, ExperimentReport};
use eegmix_core::train::{run_fold, run_loso, save_checkpoint, FoldResult};
use eegmix_core::{Error, ErrorClass};
use thiserror::Error;

pub use experiment::{ExperimentSpec, Overrides, OUT_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} fold(s) failed: {}", .failed.len(), .failed.join(", "))]
    Folds { failed: Vec<String>, numeric: bool },
    #[error("gradient check failed for: {}", .0.join(", "))]
    Gradcheck(Vec<&'static str>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Numeric => EXIT_NUMERIC,
            },
            CliError::Write { .. } => EXIT_DATA,
            CliError::Folds { numeric: true, .. } | CliError::Gradcheck(_) => EXIT_NUMERIC,
            CliError::Folds { numeric: false, .. } => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eegmix", version, about = "Calibration-free EEG drowsiness classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-subject bundle.
    Synth(SynthArgs),
    /// Train and test a single leave-one-subject-out fold.
    Train(RunArgs),
    /// Run every leave-one-subject-out fold and write the report.
    Loso(RunArgs),
    /// Check every layer's gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Merge reports into one F1 table with deltas against the first.
    Compare(CompareArgs),
    /// Print a saved report.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment document (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a document field, e.g. `train.mix.p_active=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Bundle directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// eegnet4-2, eegnet8-2, resnet1d-8 or resnet1d-18.
    #[arg(long)]
    pub model: Option<String>,
    /// none, mixup, manifold-mixup or mixstyle.
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated tap names, e.g. `block1,block2`.
    #[arg(long)]
    pub placement: Option<String>,
    /// Held-out subject id (train only; defaults to the first subject).
    #[arg(long)]
    pub target: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            config: self.config.clone(),
            sets: self.sets.clone(),
            dataset: self.dataset.clone(),
            seed: self.seed,
            out: self.out.clone(),
            jobs: self.jobs,
            model: self.model.clone(),
            method: self.method.clone(),
            placement: self.placement.clone(),
            target: self.target.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Adds an operator with a deliberately wrong backward rule.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report JSON files; deltas are taken against the first.
    #[arg(required = true, num_args = 1..)]
    pub reports: Vec<PathBuf>,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RenderFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub report: PathBuf,
    #[arg(long, value_enum, default_value_t = RenderFormat::Text)]
    pub format: RenderFormat,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Loso(a) => cmd_loso(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Render(a) => cmd_render(&a),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = a.subjects {
        cfg.n_subjects = n;
    }
    if let Some(k) = a.per_class {
        cfg.trials_per_class = k;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let bundle = generate_synthetic(&cfg)?;
    let out = experiment::resolve_out(a.out.as_deref());
    save_bundle(&bundle, &out)?;
    println!(
        "wrote {} subjects, {} trials to {}",
        bundle.subjects.len(),
        bundle.n_trials(),
        out.display()
    );
    Ok(())
}

fn write_fold(dir: &Path, fold: &FoldResult) -> Result<(), CliError> {
    save_checkpoint(
        dir,
        &fold.model,
        &fold.config,
        &fold.split.target_subject_id,
        fold.history.best_epoch,
    )?;
    write(&dir.join("history.json"), to_json(&fold.history))?;
    write(&dir.join("audit.json"), to_json(&fold.audit))?;
    write(&dir.join("metrics.json"), to_json(&fold.row))
}

pub fn cmd_train(a: &RunArgs) -> Result<(), CliError> {
    let spec = ExperimentSpec::resolve(&a.overrides())?;
    let bundle = spec.load_data()?;
    let target = spec.target.clone().unwrap_or_else(|| bundle.subjects[0].subject_id.clone());
    let (index, _) = bundle.subject(&target)?;
    let fold = run_fold(&spec.train, &bundle, index)?;
    let out = spec.out_dir();
    write(&out.join("experiment.json"), to_json(&spec))?;
    write_fold(&out.join(format!("fold_{target}")), &fold)?;
    let r = &fold.row;
    println!(
        "{target}: F1 {:.2}  AUROC {}  precision {:.2}  recall {:.2}",
        r.f1,
        r.auroc.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into()),
        r.precision,
        r.recall
    );
    Ok(())
}

pub fn cmd_loso(a: &RunArgs) -> Result<(), CliError> {
    let spec = ExperimentSpec::resolve(&a.overrides())?;
    let bundle = spec.load_data()?;
    let result = run_loso(&spec.train, &bundle, spec.jobs)?;
    let out = spec.out_dir();
    let report = &result.report;
    write(&out.join("experiment.json"), to_json(&spec))?;
    write(&out.join("report.json"), report.to_json())?;
    write(&out.join("report.csv"), report.to_csv())?;
    let text = report.render_text();
    write(&out.join("report.txt"), &text)?;
    for fold in &result.folds {
        write_fold(&out.join(format!("fold_{}", fold.split.target_subject_id)), fold)?;
    }
    print!("{text}");
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Folds {
            failed: report.failures.iter().map(|f| f.subject_id.clone()).collect(),
            numeric: report.failures.iter().any(|f| f.class == ErrorClass::Numeric),
        })
    }
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let mut cases = catalog();
    if a.inject_fault {
        cases.push(corrupted_case());
    }
    let report = run_cases(&cases, a.seed)?;
    let width = report.rows.iter().map(|r| r.op.len()).max().unwrap_or(0);
    for row in &report.rows {
        let status = if row.passed(report.tolerance) { "ok" } else { "FAIL" };
        println!("{:<width$}  max rel err {:.3e}  {status}", row.op, row.max_error());
    }
    if report.passed() {
        println!("all {} operators within {:e}", report.rows.len(), report.tolerance);
        Ok(())
    } else {
        Err(CliError::Gradcheck(report.failures()))
    }
}

fn read_report(path: &Path) -> Result<ExperimentReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    ExperimentReport::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let reports = a.reports.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?;
    let table = compare_table(&reports)?;
    if let Some(out) = &a.out {
        write(out, &table)?;
    }
    print!("{table}");
    Ok(())
}

pub fn cmd_render(a: &RenderArgs) -> Result<(), CliError> {
    let report = read_report(&a.report)?;
    match a.format {
        RenderFormat::Text => print!("{}", report.render_text()),
        RenderFormat::Csv => print!("{}", report.to_csv()),
        RenderFormat::Json => print!("{}", report.to_json()),
    }
    Ok(())
}

//! Command-line interface: `train`, `eval`, `explain`, `gradcheck`, `synth`, `cv`.
//!
//! Exit codes are 0 on success, 1 on runtime failure and 2 on usage errors
//! (bad flags, invalid configuration, missing inputs).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::dataio::{
    generate_synthetic, load_dataset, load_dataset_with_map, segment_sequences, split_dataset, write_dataset_with_map,
    Dataset, StudentSequence,
};
use crate::diffcore::grad_check;
use crate::error::{Error, Result};
use crate::explain::{render_report, trace_prediction, Outcome, ReportFormat};
use crate::metrics::{run_cross_validation, write_metrics_csv, EvalResult};
use crate::training::{evaluate, fit, write_json, BatchObjective, TrainConfig, TrainedModel};

/// Largest toy sizes accepted by `gradcheck`.
pub const GRADCHECK_MAX_DIM: usize = 8;
pub const GRADCHECK_MAX_TARGETS: usize = 8;
pub const GRADCHECK_MAX_LEVELS: usize = 3;
/// `gradcheck` passes when the worst relative error is below this.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(name = "plkt", version, about = "Probabilistic-logic knowledge tracing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration (`dataset`, `out`, `[train]`, `[synth]`).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `train.seed` and `synth.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path: a directory for `train`/`cv`, a file otherwise.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Configuration override `key=value` with a dotted key, e.g. `train.dim=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeArg {
    Plus,
    Minus,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes checkpoint.json, report.json, metrics.csv and config.toml.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (`student_id,order,question_id,concept_id,response`).
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split of a dataset; writes a metrics CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV; falls back to `dataset` in the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Split recomputed from the checkpoint's seed and fold.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
        /// Also write per-target predictions to this CSV.
        #[arg(long, value_name = "FILE")]
        predictions: Option<PathBuf>,
    },
    /// Export the reasoning behind one prediction as JSON or SVG.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset CSV; falls back to `dataset` in the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Raw student id as it appears in the dataset.
        #[arg(long)]
        student: String,
        /// Index of the target interaction in the student's sequence (0-based, ≥ 1).
        #[arg(long)]
        position: usize,
        /// Outcome whose fused weights the chart shows.
        #[arg(long, value_enum, default_value = "plus")]
        outcome: OutcomeArg,
        /// Output format.
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// Compare analytic gradients with central differences on a toy model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Interactions per toy sequence (targets = length − 1).
        #[arg(long, default_value_t = 7)]
        length: usize,
        /// Number of toy sequences.
        #[arg(long, default_value_t = 2)]
        sequences: usize,
        /// Scale the analytic gradient (negative control).
        #[arg(long, hide = true)]
        corrupt_gradient: Option<f64>,
    },
    /// Generate a synthetic dataset CSV (plus its id-map sidecar).
    Synth {
        #[command(flatten)]
        common: Common,
        /// Number of simulated students.
        #[arg(long)]
        num_students: Option<usize>,
        /// Number of latent concepts.
        #[arg(long)]
        num_concepts: Option<usize>,
        /// Questions attached to each concept.
        #[arg(long)]
        questions_per_concept: Option<usize>,
        /// Interactions per student.
        #[arg(long)]
        seq_len: Option<usize>,
        /// Probability of acquiring a concept at each practice.
        #[arg(long)]
        learn_rate: Option<f64>,
        /// Probability of a correct answer without mastery.
        #[arg(long)]
        guess: Option<f64>,
        /// Probability of a wrong answer with mastery.
        #[arg(long)]
        slip: Option<f64>,
        /// Probability that a concept starts mastered.
        #[arg(long)]
        init_mastery: Option<f64>,
        /// Extra acquisition probability after two consecutive correct answers on a concept.
        #[arg(long)]
        streak_bonus: Option<f64>,
        /// Probability that the next question stays on the previous concept.
        #[arg(long)]
        concept_stickiness: Option<f64>,
    },
    /// k-fold cross-validation; writes cv_metrics.csv and cv_report.json.
    Cv {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV; falls back to `dataset` in the config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Number of folds.
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    match cli.command {
        Command::Train { common, dataset } => cmd_train(&common, dataset),
        Command::Eval {
            common,
            checkpoint,
            dataset,
            split,
            predictions,
        } => cmd_eval(&common, &checkpoint, dataset, split, predictions),
        Command::Explain {
            common,
            checkpoint,
            dataset,
            student,
            position,
            outcome,
            format,
        } => cmd_explain(&common, &checkpoint, dataset, &student, position, outcome, format),
        Command::Gradcheck {
            common,
            length,
            sequences,
            corrupt_gradient,
        } => cmd_gradcheck(&common, length, sequences, corrupt_gradient),
        Command::Synth {
            common,
            num_students,
            num_concepts,
            questions_per_concept,
            seq_len,
            learn_rate,
            guess,
            slip,
            init_mastery,
            streak_bonus,
            concept_stickiness,
        } => {
            let mut extra = Vec::new();
            let mut push = |key: &str, v: Option<String>| {
                if let Some(v) = v {
                    extra.push(format!("synth.{key}={v}"));
                }
            };
            push("num_students", num_students.map(|v| v.to_string()));
            push("num_concepts", num_concepts.map(|v| v.to_string()));
            push("questions_per_concept", questions_per_concept.map(|v| v.to_string()));
            push("seq_len", seq_len.map(|v| v.to_string()));
            push("learn_rate", learn_rate.map(float));
            push("guess", guess.map(float));
            push("slip", slip.map(float));
            push("init_mastery", init_mastery.map(float));
            push("streak_bonus", streak_bonus.map(float));
            push("concept_stickiness", concept_stickiness.map(float));
            cmd_synth(&common, extra)
        }
        Command::Cv { common, dataset, folds } => cmd_cv(&common, dataset, folds),
    }
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

/// Resolves the run configuration: defaults, then `--config`, then
/// `--set` overrides, then `--seed` / `--out`.
pub fn resolve_config(common: &Common, base: &RunConfig, extra: &[String]) -> std::result::Result<RunConfig, CliError> {
    if let Some(path) = &common.config {
        if !path.exists() {
            return Err(usage(format!("config file `{}` does not exist", path.display())));
        }
    }
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    if let Some(seed) = common.seed {
        overrides.push(format!("train.seed={seed}"));
        overrides.push(format!("synth.seed={seed}"));
    }
    let mut config = RunConfig::resolve(base, common.config.as_deref(), &overrides)?;
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn require_dataset(flag: Option<PathBuf>, config: &RunConfig) -> std::result::Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| config.dataset.clone())
        .ok_or_else(|| usage("no dataset given (use --dataset or `dataset` in the config)"))?;
    if !path.is_file() {
        return Err(usage(format!("dataset `{}` does not exist", path.display())));
    }
    Ok(path)
}

fn out_dir(config: &RunConfig, default: &str) -> std::result::Result<PathBuf, CliError> {
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from(default));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::from(Error::io(&dir, e)))?;
    Ok(dir)
}

fn out_file(config: &RunConfig, default: &str) -> std::result::Result<PathBuf, CliError> {
    let path = config.out.clone().unwrap_or_else(|| PathBuf::from(default));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::from(Error::io(parent, e)))?;
    }
    Ok(path)
}

/// Train / validation / test sequences for a configuration, each cut into
/// windows of at most `max_len`.
pub fn prepare_splits(dataset: &Dataset, config: &TrainConfig) -> Result<[Vec<StudentSequence>; 3]> {
    let split = split_dataset(&dataset.sequences, config.seed, config.fold)?;
    Ok([
        segment_sequences(&split.train, config.max_len),
        segment_sequences(&split.validation, config.max_len),
        segment_sequences(&split.test, config.max_len),
    ])
}

fn cmd_train(common: &Common, dataset: Option<PathBuf>) -> std::result::Result<(), CliError> {
    let config = resolve_config(common, &RunConfig::default(), &[])?;
    let path = require_dataset(dataset, &config)?;
    let dir = out_dir(&config, "runs/train")?;
    let data = load_dataset(&path)?;
    let [train, validation, test] = prepare_splits(&data, &config.train)?;
    let fitted = fit(&data, &train, &validation, &config.train)?;
    fitted.model.save(&dir.join("checkpoint.json"))?;
    write_json(&dir.join("report.json"), &fitted.report)?;
    let mut results = Vec::new();
    for (name, seqs) in [("train", &train), ("validation", &validation), ("test", &test)] {
        if seqs.is_empty() {
            continue;
        }
        let r = evaluate(&fitted.model, seqs)?;
        println!(
            "{name}: auc {:.4} acc {:.4} loss {:.4} targets {}",
            r.auc, r.acc, r.loss, r.n_targets
        );
        if name == "test" {
            results.push(EvalResult {
                fold_index: Some(config.train.fold),
                ..r
            });
        }
    }
    write_metrics_csv(&dir.join("metrics.csv"), &results)?;
    let mut resolved = config.clone();
    resolved.dataset = Some(path);
    resolved.out = Some(dir.clone());
    resolved.save(&dir.join("config.toml"))?;
    let last = fitted.report.epochs.last().expect("at least one epoch");
    println!(
        "best epoch {} val auc {:.4}; final train BCE {:.5}; wrote {}",
        fitted.report.best_epoch,
        fitted.report.best_val_auc,
        last.train_loss,
        dir.display()
    );
    Ok(())
}

fn load_for_model(model: &TrainedModel, path: &Path) -> Result<Dataset> {
    let data = load_dataset_with_map(path, &model.id_map)?;
    model.check_vocabulary(&data)?;
    Ok(data)
}

fn cmd_eval(
    common: &Common,
    checkpoint: &Path,
    dataset: Option<PathBuf>,
    split: SplitName,
    predictions: Option<PathBuf>,
) -> std::result::Result<(), CliError> {
    let config = resolve_config(common, &RunConfig::default(), &[])?;
    let path = require_dataset(dataset, &config)?;
    let model = TrainedModel::load(checkpoint)?;
    let data = load_for_model(&model, &path)?;
    let mut split_config = model.config.clone();
    if let Some(seed) = common.seed {
        split_config.seed = seed;
    }
    let seqs = match split {
        SplitName::All => segment_sequences(&data.sequences, split_config.max_len),
        other => {
            let [train, validation, test] = prepare_splits(&data, &split_config)?;
            match other {
                SplitName::Train => train,
                SplitName::Validation => validation,
                _ => test,
            }
        }
    };
    if seqs.is_empty() {
        return Err(Error::Data(format!("the {split:?} split is empty")).into());
    }
    let result = evaluate(&model, &seqs)?;
    let file = out_file(&config, "metrics.csv")?;
    write_metrics_csv(&file, std::slice::from_ref(&result))?;
    if let Some(pred_path) = predictions {
        write_predictions(&pred_path, &model, &seqs)?;
    }
    println!(
        "{split:?}: auc {:.4} acc {:.4} targets {}; wrote {}",
        result.auc,
        result.acc,
        result.n_targets,
        file.display()
    );
    Ok(())
}

fn write_predictions(path: &Path, model: &TrainedModel, seqs: &[StudentSequence]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "student_id",
        "segment_position",
        "question_id",
        "concept_id",
        "response",
        "probability",
    ])?;
    for (seq, probs) in seqs.iter().zip(model.predict(seqs)?) {
        for (j, p) in probs.iter().enumerate() {
            let x = seq.valid()[j + 1];
            w.write_record([
                seq.student_id.clone(),
                (j + 1).to_string(),
                model.id_map.questions.get(x.question_id).cloned().unwrap_or_default(),
                model.id_map.concepts.get(x.concept_id).cloned().unwrap_or_default(),
                x.response.to_string(),
                format!("{p:?}"),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_explain(
    common: &Common,
    checkpoint: &Path,
    dataset: Option<PathBuf>,
    student: &str,
    position: usize,
    outcome: OutcomeArg,
    format: FormatArg,
) -> std::result::Result<(), CliError> {
    let config = resolve_config(common, &RunConfig::default(), &[])?;
    let path = require_dataset(dataset, &config)?;
    let model = TrainedModel::load(checkpoint)?;
    let data = load_for_model(&model, &path)?;
    let seq = data.sequences.iter().find(|s| s.student_id == student).ok_or_else(|| {
        let first = data.sequences.first().map(|s| s.student_id.as_str()).unwrap_or("");
        let last = data.sequences.last().map(|s| s.student_id.as_str()).unwrap_or("");
        CliError::from(Error::Data(format!(
            "unknown student `{student}`; available ids run from `{first}` to `{last}` ({} students)",
            data.sequences.len()
        )))
    })?;
    let max_len = model.params.arch.max_len;
    if position == 0 || position >= seq.valid_length {
        return Err(Error::Data(format!(
            "position {position} out of range 1..{} for `{student}`",
            seq.valid_length
        ))
        .into());
    }
    let (segment, local) = (position / max_len, position % max_len);
    if local == 0 {
        return Err(Error::Data(format!(
            "position {position} starts a new window of {max_len} interactions and has no history"
        ))
        .into());
    }
    let chunk = segment_sequences(std::slice::from_ref(seq), max_len)
        .into_iter()
        .nth(segment)
        .ok_or_else(|| CliError::from(Error::Data(format!("position {position} falls in a dropped window"))))?;
    let trace = trace_prediction(&model, &chunk, local)?;
    let (fmt, default) = match format {
        FormatArg::Json => (ReportFormat::Json, "trace.json"),
        FormatArg::Svg => (ReportFormat::Svg, "trace.svg"),
    };
    let outcome = match outcome {
        OutcomeArg::Plus => Outcome::Plus,
        OutcomeArg::Minus => Outcome::Minus,
    };
    let text = render_report(&trace, fmt, outcome)?;
    let file = out_file(&config, default)?;
    std::fs::write(&file, text).map_err(|e| CliError::from(Error::io(&file, e)))?;
    println!("p = {:.6}; wrote {}", trace.probability, file.display());
    Ok(())
}

/// Default toy configuration for `gradcheck`.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        dim: 4,
        levels: 3,
        max_len: 8,
        global_hidden: 6,
        dropout: 0.0,
        ..TrainConfig::default()
    }
}

fn cmd_gradcheck(
    common: &Common,
    length: usize,
    sequences: usize,
    corrupt_gradient: Option<f64>,
) -> std::result::Result<(), CliError> {
    let base = RunConfig {
        train: toy_train_config(),
        ..RunConfig::default()
    };
    let config = resolve_config(common, &base, &[])?;
    let t = &config.train;
    if t.dim > GRADCHECK_MAX_DIM || t.levels > GRADCHECK_MAX_LEVELS || length < 2 || length - 1 > GRADCHECK_MAX_TARGETS
    {
        return Err(usage(format!(
            "gradcheck needs toy sizes: dim ≤ {GRADCHECK_MAX_DIM}, levels ≤ {GRADCHECK_MAX_LEVELS}, 2 ≤ length ≤ {}",
            GRADCHECK_MAX_TARGETS + 1
        )));
    }
    if length > t.max_len {
        return Err(usage(format!("length {length} exceeds train.max_len {}", t.max_len)));
    }
    let data = generate_synthetic(&crate::dataio::SynthParams {
        num_students: sequences.max(1),
        num_concepts: 2,
        questions_per_concept: 2,
        seq_len: length,
        seed: t.seed,
        ..crate::dataio::SynthParams::default()
    })?;
    let mut model = TrainedModel::init(&data, &data.sequences, t)?;
    let mut objective = BatchObjective::new(&model.difficulty, &data.sequences);
    if let Some(scale) = corrupt_gradient {
        objective.gradient_scale = scale;
    }
    let started = std::time::Instant::now();
    let report = grad_check(&objective, &mut model.params, GRADCHECK_STEP)?;
    let worst = report.worst_group().expect("model has parameters");
    let pass = report.max_rel_error() < GRADCHECK_TOLERANCE;
    println!(
        "{}: max relative error {:.3e} (worst group `{}`), {} groups, {} evaluations, {:.2}s",
        if pass { "PASS" } else { "FAIL" },
        report.max_rel_error(),
        worst.name,
        report.groups.len(),
        report.evaluations,
        started.elapsed().as_secs_f64()
    );
    if let Some(out) = &config.out {
        let rows: Vec<serde_json::Value> = report
            .groups
            .iter()
            .map(|g| serde_json::json!({"name": g.name, "rel_error": g.rel_error, "max_abs_diff": g.max_abs_diff}))
            .collect();
        write_json(
            out,
            &serde_json::json!({"pass": pass, "max_rel_error": report.max_rel_error(), "groups": rows}),
        )?;
    }
    if pass {
        Ok(())
    } else {
        Err(CliError {
            code: 1,
            message: format!("gradient check failed in `{}`", worst.name),
        })
    }
}

fn cmd_synth(common: &Common, extra: Vec<String>) -> std::result::Result<(), CliError> {
    let config = resolve_config(common, &RunConfig::default(), &extra)?;
    let data = generate_synthetic(&config.synth)?;
    let file = out_file(&config, "synthetic.csv")?;
    write_dataset_with_map(&file, &data)?;
    println!(
        "{} students, {} questions, {} concepts, accuracy {:.3}; wrote {}",
        data.sequences.len(),
        data.num_questions,
        data.num_concepts,
        crate::dataio::overall_accuracy(&data.sequences),
        file.display()
    );
    Ok(())
}

fn cmd_cv(common: &Common, dataset: Option<PathBuf>, folds: usize) -> std::result::Result<(), CliError> {
    let config = resolve_config(common, &RunConfig::default(), &[])?;
    let path = require_dataset(dataset, &config)?;
    let dir = out_dir(&config, "runs/cv")?;
    let data = load_dataset(&path)?;
    let report = run_cross_validation(&data, &config.train, folds)?;
    write_metrics_csv(&dir.join("cv_metrics.csv"), &report.folds)?;
    write_json(&dir.join("cv_report.json"), &report)?;
    println!(
        "auc {:.4} ± {:.4}, acc {:.4} ± {:.4} over {folds} folds; wrote {}",
        report.mean_auc,
        report.std_auc,
        report.mean_acc,
        report.std_acc,
        dir.display()
    );
    Ok(())
}

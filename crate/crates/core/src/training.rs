//! Mini-batch Adam training with early stopping, evaluation and checkpoints.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{build_difficulty, Dataset, DifficultyTable, IdMap, StudentSequence, DEFAULT_MAX_LEN};
use crate::diffcore::{AdamState, Objective};
use crate::error::{Error, Result};
use crate::metrics::EvalResult;
use crate::mlp::Dropout;
use crate::model::{run_sequence, Architecture, GradSink, ModelParams};

/// Version tag written into every checkpoint.
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Training hyperparameters. Unknown keys are rejected when deserializing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Sequences per mini-batch.
    pub batch_size: usize,
    pub dim: usize,
    pub levels: usize,
    pub lambda: f64,
    pub dropout: f64,
    pub max_len: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub global_hidden: usize,
    /// Which of the five student blocks is held out as the test set.
    pub fold: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            dim: 256,
            levels: 3,
            lambda: 0.7,
            dropout: 0.2,
            max_len: DEFAULT_MAX_LEN,
            max_epochs: 200,
            patience: 5,
            seed: 0,
            epsilon: 1e-4,
            global_hidden: 256,
            fold: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be ≥ 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        if self.fold >= crate::dataio::NUM_FOLDS {
            return Err(Error::Config(format!(
                "fold must be in 0..{}, got {}",
                crate::dataio::NUM_FOLDS,
                self.fold
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        self.architecture(1, 1).validate()
    }

    pub fn architecture(&self, num_questions: usize, num_concepts: usize) -> Architecture {
        Architecture {
            num_questions,
            num_concepts,
            dim: self.dim,
            levels: self.levels,
            max_len: self.max_len,
            global_hidden: self.global_hidden,
            lambda: self.lambda,
            epsilon: self.epsilon,
        }
    }
}

/// Parameters together with everything needed to run them on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    /// Question difficulty estimated from the training split.
    pub difficulty: DifficultyTable,
    pub config: TrainConfig,
    pub id_map: IdMap,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    /// Fresh, untrained model for a dataset's vocabulary.
    pub fn init(dataset: &Dataset, train: &[StudentSequence], config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let arch = config.architecture(dataset.num_questions, dataset.num_concepts);
        Ok(TrainedModel {
            params: ModelParams::init(arch, config.seed)?,
            difficulty: build_difficulty(train, dataset.num_questions),
            config: config.clone(),
            id_map: dataset.id_map.clone(),
        })
    }

    /// Per-target probabilities for each sequence, in order.
    pub fn predict(&self, seqs: &[StudentSequence]) -> Result<Vec<Vec<f64>>> {
        seqs.iter()
            .map(|s| crate::model::forward_sequence(&self.params, &self.difficulty, s))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let ckpt = Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(std::io::BufWriter::new(file), &ckpt)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "checkpoint schema version {} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})",
                ckpt.schema_version
            )));
        }
        ckpt.model.params.arch.validate()?;
        Ok(ckpt.model)
    }

    /// Fails when the dataset's vocabulary exceeds the model's tables.
    pub fn check_vocabulary(&self, dataset: &Dataset) -> Result<()> {
        let arch = &self.params.arch;
        if dataset.num_questions > arch.num_questions || dataset.num_concepts > arch.num_concepts {
            return Err(Error::Data(format!(
                "vocabulary mismatch: dataset has {} questions / {} concepts, model {} / {}",
                dataset.num_questions, dataset.num_concepts, arch.num_questions, arch.num_concepts
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_acc: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub steps: usize,
}

pub struct FitOutput {
    /// Parameters of the best validation epoch.
    pub model: TrainedModel,
    pub report: TrainReport,
}

/// Mean BCE over all targets of `seqs` and its gradient (ordered like
/// `params.tensors()`), with optional dropout.
pub fn batch_gradient(
    params: &ModelParams,
    difficulty: &DifficultyTable,
    seqs: &[&StudentSequence],
    mut dropout: Option<&mut Dropout>,
) -> Result<(f64, ModelParams)> {
    let n_targets: usize = seqs.iter().map(|s| s.num_targets()).sum();
    if n_targets == 0 {
        return Err(Error::Data("batch has no prediction targets".into()));
    }
    let scale = 1.0 / n_targets as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    for seq in seqs {
        let sink = GradSink {
            loss_scale: scale,
            grads: &mut grads,
        };
        loss += run_sequence(params, difficulty, seq, dropout.as_deref_mut(), Some(sink), false)?.loss_sum;
    }
    Ok((loss * scale, grads))
}

/// The full training loss over a fixed set of sequences, without dropout.
pub struct BatchObjective<'a> {
    pub difficulty: &'a DifficultyTable,
    pub sequences: &'a [StudentSequence],
    /// Multiplies the analytic gradient; `1.0` except in negative controls.
    pub gradient_scale: f64,
}

impl<'a> BatchObjective<'a> {
    pub fn new(difficulty: &'a DifficultyTable, sequences: &'a [StudentSequence]) -> Self {
        BatchObjective {
            difficulty,
            sequences,
            gradient_scale: 1.0,
        }
    }

    fn refs(&self) -> Vec<&StudentSequence> {
        self.sequences.iter().collect()
    }
}

impl Objective<ModelParams> for BatchObjective<'_> {
    fn value(&self, params: &ModelParams) -> Result<f64> {
        let mut loss = 0.0;
        let mut n = 0;
        for seq in self.sequences {
            let out = run_sequence(params, self.difficulty, seq, None, None, false)?;
            loss += out.loss_sum;
            n += out.labels.len();
        }
        Ok(loss / n as f64)
    }

    fn gradient(&self, params: &ModelParams) -> Result<Vec<Vec<f64>>> {
        let (_, grads) = batch_gradient(params, self.difficulty, &self.refs(), None)?;
        let mut g = grads.to_grad_vec();
        if self.gradient_scale != 1.0 {
            g.iter_mut().flatten().for_each(|v| *v *= self.gradient_scale);
        }
        Ok(g)
    }
}

/// Pooled AUC / accuracy / loss over every target of `seqs`.
pub fn evaluate(model: &TrainedModel, seqs: &[StudentSequence]) -> Result<EvalResult> {
    let (p, l) = pooled_predictions(model, seqs)?;
    if p.is_empty() {
        return Err(Error::Data("evaluation split has no prediction targets".into()));
    }
    EvalResult::from_predictions(&p, &l, None)
}

/// Concatenated predictions and labels over all sequences.
pub fn pooled_predictions(model: &TrainedModel, seqs: &[StudentSequence]) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for seq in seqs {
        let out = run_sequence(&model.params, &model.difficulty, seq, None, None, false)?;
        preds.extend(out.probabilities);
        labels.extend(out.labels);
    }
    Ok((preds, labels))
}

fn better(auc: f64, loss: f64, best_auc: f64, best_loss: f64) -> bool {
    let key = |a: f64| if a.is_nan() { f64::NEG_INFINITY } else { a };
    let (a, b) = (key(auc), key(best_auc));
    a > b || (a == b && loss < best_loss)
}

/// Trains on `train`, selecting the epoch with the best validation AUC
/// (ties broken by lower validation loss). Deterministic under `config.seed`.
pub fn fit(
    dataset: &Dataset,
    train: &[StudentSequence],
    validation: &[StudentSequence],
    config: &TrainConfig,
) -> Result<FitOutput> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Data(format!(
            "training needs nonempty splits (train {}, validation {})",
            train.len(),
            validation.len()
        )));
    }
    let mut model = TrainedModel::init(dataset, train, config)?;
    let mut adam = AdamState::new(&model.params, config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut dropout = Dropout {
        rate: config.dropout,
        rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2)),
    };

    let mut best: Option<(TrainedModel, f64, f64, usize)> = None;
    let mut epochs = Vec::new();
    let mut since_best = 0;
    let mut steps = 0;
    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut target_sum = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&StudentSequence> = chunk.iter().map(|&i| &train[i]).collect();
            let n: usize = batch.iter().map(|s| s.num_targets()).sum();
            let (loss, grads) = batch_gradient(&model.params, &model.difficulty, &batch, Some(&mut dropout))?;
            if !loss.is_finite() {
                let culprit = model.params.all_finite().err().unwrap_or_else(|| "loss".into());
                return Err(Error::NonFinite {
                    name: format!("{culprit} (epoch {epoch}, step {steps})"),
                });
            }
            if let Err(name) = grads.all_finite() {
                return Err(Error::NonFinite {
                    name: format!("gradient of {name} (epoch {epoch}, step {steps})"),
                });
            }
            adam.step(&mut model.params, &grads.to_grad_vec())?;
            if let Err(name) = model.params.all_finite() {
                return Err(Error::NonFinite {
                    name: format!("{name} after update (epoch {epoch}, step {steps})"),
                });
            }
            loss_sum += loss * n as f64;
            target_sum += n;
            steps += 1;
        }
        let val = evaluate(&model, validation)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / target_sum.max(1) as f64,
            val_auc: val.auc,
            val_acc: val.acc,
            val_loss: val.loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.5} val auc {:.4} acc {:.4} ({:.1}s)",
            record.train_loss,
            record.val_auc,
            record.val_acc,
            record.seconds
        );
        epochs.push(record);
        let improved = match &best {
            None => true,
            Some((_, a, l, _)) => better(val.auc, val.loss, *a, *l),
        };
        if improved {
            best = Some((model.clone(), val.auc, val.loss, epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let (best_model, best_val_auc, _, best_epoch) = best.expect("at least one epoch runs");
    Ok(FitOutput {
        model: best_model,
        report: TrainReport {
            epochs,
            best_epoch,
            best_val_auc,
            steps,
        },
    })
}

/// Writes a JSON document to `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

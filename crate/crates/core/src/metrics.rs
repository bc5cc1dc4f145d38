//! AUC / accuracy, reference baselines and k-fold cross-validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{split_dataset, Dataset, StudentSequence, NUM_FOLDS};
use crate::error::{Error, Result};
use crate::training::{evaluate, fit, TrainConfig};

/// Area under the ROC curve in Mann–Whitney form: the probability that a
/// random positive outranks a random negative, ties counting one half.
/// Sorting-based, `O(n log n)`.
pub fn auc(predictions: &[f64], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions, {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));

    // U = Σ over tie groups of (positives in group)·(negatives strictly
    // below) + ½·(positives in group)·(negatives in group), in integer
    // half-units so the result is exact.
    let mut half_units: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && predictions[order[j]] == predictions[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        half_units += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    Ok(half_units as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Fraction of predictions with `(p ≥ threshold) == label`.
pub fn accuracy(predictions: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty set"));
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| (p >= threshold) == (l == 1))
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// `NaN` when the split has a single class.
    pub auc: f64,
    pub acc: f64,
    pub n_targets: usize,
    pub loss: f64,
    pub fold_index: Option<usize>,
}

impl EvalResult {
    pub fn from_predictions(predictions: &[f64], labels: &[u8], fold_index: Option<usize>) -> Result<Self> {
        Ok(EvalResult {
            auc: auc(predictions, labels).unwrap_or(f64::NAN),
            acc: accuracy(predictions, labels, 0.5)?,
            n_targets: predictions.len(),
            loss: crate::model::bce_loss(predictions, labels),
            fold_index,
        })
    }
}

/// Reference predictors computed from the same prediction targets the
/// model sees (every position after the first of each sequence).
pub mod baselines {
    use super::*;

    /// Predicts the training majority class everywhere; its AUC is 0.5 by
    /// construction since every score ties.
    pub fn majority_class(train: &[StudentSequence], eval: &[StudentSequence]) -> (Vec<f64>, Vec<u8>) {
        let rate = crate::dataio::overall_accuracy(train);
        let p = if rate >= 0.5 { 1.0 } else { 0.0 };
        let labels = target_labels(eval);
        (vec![p; labels.len()], labels)
    }

    /// Mean of the student's earlier responses on the target's concept;
    /// falls back to the training accuracy of that concept when the student
    /// has not practiced it yet.
    pub fn concept_running_mean(train: &[StudentSequence], eval: &[StudentSequence]) -> (Vec<f64>, Vec<u8>) {
        let mut totals: std::collections::HashMap<usize, (f64, f64)> = Default::default();
        for x in train.iter().flat_map(|s| s.valid()) {
            let e = totals.entry(x.concept_id).or_default();
            e.0 += x.response as f64;
            e.1 += 1.0;
        }
        let global = crate::dataio::overall_accuracy(train);
        let prior = |c: usize| totals.get(&c).map(|(m, n)| m / n).unwrap_or(global);
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for seq in eval {
            let mut seen: std::collections::HashMap<usize, (f64, f64)> = Default::default();
            for (j, x) in seq.valid().iter().enumerate() {
                if j > 0 {
                    let p = seen
                        .get(&x.concept_id)
                        .map(|(m, n)| m / n)
                        .unwrap_or_else(|| prior(x.concept_id));
                    preds.push(p);
                    labels.push(x.response);
                }
                let e = seen.entry(x.concept_id).or_default();
                e.0 += x.response as f64;
                e.1 += 1.0;
            }
        }
        (preds, labels)
    }

    pub fn target_labels(seqs: &[StudentSequence]) -> Vec<u8> {
        seqs.iter()
            .flat_map(|s| s.valid().iter().skip(1).map(|x| x.response))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalResult>,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains one model per fold and evaluates it on that fold's test set.
/// Each fold uses the same configuration and seed; only the split differs.
pub fn run_cross_validation(dataset: &Dataset, config: &TrainConfig, k: usize) -> Result<CvReport> {
    if k == 0 || k > NUM_FOLDS {
        return Err(Error::Config(format!("k must be in 1..={NUM_FOLDS}, got {k}")));
    }
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let split = split_dataset(&dataset.sequences, config.seed, fold)?;
        let train = crate::dataio::segment_sequences(&split.train, config.max_len);
        let validation = crate::dataio::segment_sequences(&split.validation, config.max_len);
        let test = crate::dataio::segment_sequences(&split.test, config.max_len);
        let fitted = fit(dataset, &train, &validation, config)?;
        let mut result = evaluate(&fitted.model, &test)?;
        result.fold_index = Some(fold);
        log::info!("fold {fold}: auc {:.4} acc {:.4}", result.auc, result.acc);
        folds.push(result);
    }
    let aucs: Vec<f64> = folds.iter().map(|f| f.auc).collect();
    let accs: Vec<f64> = folds.iter().map(|f| f.acc).collect();
    let (mean_auc, std_auc) = mean_std(&aucs);
    let (mean_acc, std_acc) = mean_std(&accs);
    Ok(CvReport {
        folds,
        mean_auc,
        std_auc,
        mean_acc,
        std_acc,
    })
}

/// `fold,auc,acc,n_targets` rows followed by a `mean,…` and `std,…` footer.
pub fn write_metrics_csv(path: &Path, results: &[EvalResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "auc", "acc", "n_targets"])?;
    for (i, r) in results.iter().enumerate() {
        let fold = r.fold_index.unwrap_or(i).to_string();
        w.write_record([fold, fmt(r.auc), fmt(r.acc), r.n_targets.to_string()])?;
    }
    let aucs: Vec<f64> = results.iter().map(|r| r.auc).collect();
    let accs: Vec<f64> = results.iter().map(|r| r.acc).collect();
    let n: usize = results.iter().map(|r| r.n_targets).sum();
    let (ma, sa) = mean_std(&aucs);
    let (mc, sc) = mean_std(&accs);
    w.write_record(["mean".to_string(), fmt(ma), fmt(mc), n.to_string()])?;
    w.write_record(["std".to_string(), fmt(sa), fmt(sc), String::new()])?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn fmt(x: f64) -> String {
    format!("{x:.6}")
}

//! Loss, the epoch loop, k-fold cross-validation, and the architecture grid
//! harness. Everything is bit-deterministic given the config seed.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::coarsen::CoarseningPlan;
use crate::data::{split, SignalDataset, SplitKind, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::{eval_report, EvalReport};
use crate::network::{backward, forward, init_params, ModelSpec, Mode};
use crate::params::{adam_step, ParameterSet};
use crate::util::{fnv1a64, shuffled_indices};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            l2_lambda: 1e-6,
            batch_size: 1024,
            epochs: 50,
            dropout_rate: 0.5,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::InvalidArgument("l2 lambda must be >= 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_gaa: Option<f64>,
    pub test_gaa: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub run_id: String,
    pub config: TrainConfig,
    pub arch: String,
    pub epochs: Vec<EpochStats>,
    pub final_eval: EvalReport,
    pub final_train_gaa: f64,
    pub wall_time_seconds: f64,
}

/// Mean cross-entropy over the batch plus lambda times the sum of squared
/// regularized parameters (weights and biases; batch-norm scale/shift and
/// running statistics are excluded).
pub fn loss(
    probabilities: &Array2<f64>,
    labels: &[usize],
    params: &ParameterSet,
    l2_lambda: f64,
) -> Result<f64> {
    let (b, o) = probabilities.dim();
    if labels.len() != b {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {b} probability rows",
            labels.len()
        )));
    }
    let mut data_term = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= o {
            return Err(Error::LabelOutOfRange {
                sample: i,
                label,
                n_classes: o,
            });
        }
        data_term -= probabilities[[i, label]].max(1e-300).ln();
    }
    Ok(data_term / b as f64 + l2_lambda * params.l2_sum())
}

fn batch_of(dataset: &SignalDataset, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
    let mut batch = Array2::<f64>::zeros((indices.len(), dataset.n_channels));
    let mut labels = Vec::with_capacity(indices.len());
    for (row, &ix) in indices.iter().enumerate() {
        batch.row_mut(row).assign(&dataset.values.row(ix));
        labels.push(dataset.labels[ix]);
    }
    (batch, labels)
}

/// Eval-mode prediction over a set of indices, chunked to bound memory.
pub fn predict(
    params: &mut ParameterSet,
    spec: &ModelSpec,
    plan: &CoarseningPlan,
    dataset: &SignalDataset,
    indices: &[usize],
) -> Result<Array2<f64>> {
    let mut probs = Array2::<f64>::zeros((indices.len(), spec.n_classes));
    for (chunk_ix, chunk) in indices.chunks(1024).enumerate() {
        let (batch, _) = batch_of(dataset, chunk);
        let pass = forward(params, spec, plan, &batch, Mode::Eval, 0)?;
        for (row, probs_row) in pass.probs.outer_iter().enumerate() {
            probs.row_mut(chunk_ix * 1024 + row).assign(&probs_row);
        }
    }
    Ok(probs)
}

fn gaa_of(
    params: &mut ParameterSet,
    spec: &ModelSpec,
    plan: &CoarseningPlan,
    dataset: &SignalDataset,
    indices: &[usize],
) -> Result<f64> {
    let probs = predict(params, spec, plan, dataset, indices)?;
    let labels: Vec<usize> = indices.iter().map(|&i| dataset.labels[i]).collect();
    Ok(eval_report(&probs, &labels)?.gaa)
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: ParameterSet,
}

/// The epoch loop: seeded shuffle of the train indices each epoch,
/// minibatches of `batch_size` (a final partial batch is kept when it has at
/// least 2 samples), forward -> backward (cross-entropy + L2) -> Adam.
/// A non-finite loss aborts with a diagnostic. Deterministic per seed.
pub fn train(
    dataset: &SignalDataset,
    split_plan: &SplitPlan,
    plan: &CoarseningPlan,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let mut params = init_params(spec, plan, config.seed)?;
    let train_ix = &split_plan.train_indices;
    if train_ix.len() < 2 {
        return Err(Error::InvalidArgument(
            "training split needs at least 2 samples".into(),
        ));
    }
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let order = shuffled_indices(train_ix.len(), config.seed, 0xe0 + epoch as u64);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue; // batch norm needs 2; a 1-sample tail is dropped
            }
            let indices: Vec<usize> = chunk.iter().map(|&i| train_ix[i]).collect();
            let (batch, labels) = batch_of(dataset, &indices);
            let dropout_seed = config
                .seed
                .wrapping_mul(0x9e37_79b9)
                .wrapping_add((epoch * 1_000_003 + batch_no) as u64);
            let pass = forward(&mut params, spec, plan, &batch, Mode::Train, dropout_seed)?;
            let batch_loss = loss(&pass.probs, &labels, &params, config.l2_lambda)?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    detail: format!(
                        "loss={batch_loss}; lr={}, step={}",
                        config.learning_rate, params.step
                    ),
                });
            }
            let grads = backward(&params, spec, plan, &pass.cache, &labels, config.l2_lambda)?;
            adam_step(&mut params, &grads, config.learning_rate)?;
            epoch_loss += batch_loss;
            n_batches += 1;
        }
        let train_loss = epoch_loss / n_batches.max(1) as f64;
        let evaluate = config.eval_every > 0
            && ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs);
        let (train_gaa, test_gaa) = if evaluate {
            let tg = gaa_of(&mut params, spec, plan, dataset, train_ix)?;
            let eg = if split_plan.test_indices.is_empty() {
                None
            } else {
                Some(gaa_of(&mut params, spec, plan, dataset, &split_plan.test_indices)?)
            };
            (Some(tg), eg)
        } else {
            (None, None)
        };
        epochs.push(EpochStats {
            epoch,
            train_loss,
            train_gaa,
            test_gaa,
        });
    }

    let eval_indices: &[usize] = if split_plan.test_indices.is_empty() {
        train_ix
    } else {
        &split_plan.test_indices
    };
    let probs = predict(&mut params, spec, plan, dataset, eval_indices)?;
    let labels: Vec<usize> = eval_indices.iter().map(|&i| dataset.labels[i]).collect();
    let final_eval = eval_report(&probs, &labels)?;
    let final_train_gaa = gaa_of(&mut params, spec, plan, dataset, train_ix)?;

    let run_id = format!(
        "{:016x}",
        fnv1a64(
            format!(
                "{}|{}|{}|{}|{}",
                spec.arch_text, config.seed, config.epochs, config.learning_rate, dataset.n_samples
            )
            .as_bytes()
        )
    );
    let report = TrainReport {
        run_id,
        config: config.clone(),
        arch: spec.arch_text.clone(),
        epochs,
        final_eval,
        final_train_gaa,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { report, params })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvSummary {
    pub k: usize,
    pub fold_gaa: Vec<f64>,
    pub fold_macro_f1: Vec<f64>,
    pub mean_gaa: f64,
    pub min_gaa: f64,
    pub max_gaa: f64,
    pub mean_macro_f1: f64,
}

pub struct CvOutcome {
    pub reports: Vec<TrainReport>,
    pub summary: CvSummary,
}

/// K-fold cross-validation: folds come from one master shuffle (the config
/// seed), each fold trains from scratch on the remaining k-1 blocks.
pub fn cross_validate(
    dataset: &SignalDataset,
    k: usize,
    plan: &CoarseningPlan,
    spec: &ModelSpec,
    config: &TrainConfig,
) -> Result<CvOutcome> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be >= 2".into()));
    }
    let mut reports = Vec::with_capacity(k);
    for fold_id in 0..k {
        let split_plan = split(dataset, SplitKind::KFold { k, fold_id }, config.seed)?;
        let outcome = train(dataset, &split_plan, plan, spec, config)?;
        reports.push(outcome.report);
    }
    let fold_gaa: Vec<f64> = reports.iter().map(|r| r.final_eval.gaa).collect();
    let fold_macro_f1: Vec<f64> = reports.iter().map(|r| r.final_eval.macro_f1).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = CvSummary {
        k,
        mean_gaa: mean(&fold_gaa),
        min_gaa: fold_gaa.iter().cloned().fold(f64::INFINITY, f64::min),
        max_gaa: fold_gaa.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_macro_f1: mean(&fold_macro_f1),
        fold_gaa,
        fold_macro_f1,
    };
    Ok(CvOutcome { reports, summary })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridRow {
    pub arch: String,
    pub order: usize,
    pub filters: Vec<usize>,
    pub gaa: Option<f64>,
    pub error: Option<String>,
}

/// Trains every spec with the identical config and returns rows sorted by
/// descending test GAA; a failing spec is recorded inline, not fatal.
pub fn grid(
    dataset: &SignalDataset,
    specs: &[ModelSpec],
    plan: &CoarseningPlan,
    config: &TrainConfig,
) -> Result<Vec<GridRow>> {
    if specs.is_empty() {
        return Err(Error::InvalidArgument("grid needs at least one spec".into()));
    }
    let split_plan = split(
        dataset,
        SplitKind::Holdout {
            train_fraction: 0.9,
        },
        config.seed,
    )?;
    let mut rows: Vec<GridRow> = specs
        .iter()
        .map(|spec| match train(dataset, &split_plan, plan, spec, config) {
            Ok(outcome) => GridRow {
                arch: spec.arch_text.clone(),
                order: spec.order,
                filters: spec.filters.clone(),
                gaa: Some(outcome.report.final_eval.gaa),
                error: None,
            },
            Err(e) => GridRow {
                arch: spec.arch_text.clone(),
                order: spec.order,
                filters: spec.filters.clone(),
                gaa: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    rows.sort_by(|a, b| {
        b.gaa
            .unwrap_or(f64::NEG_INFINITY)
            .partial_cmp(&a.gaa.unwrap_or(f64::NEG_INFINITY))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(rows)
}

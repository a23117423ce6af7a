use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeatureRow, Mode, Params, Rmsprop, TaskNetwork, TaskNetworkSpec};
use crate::error::{Error, Result};
use crate::math::bce_with_logit;
use crate::task::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub row: FeatureRow,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub l2_strength: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub rmsprop: Rmsprop,
    pub seed: u64,
    /// Fraction of the training rows held out for early stopping when no
    /// dev set is given.
    pub validation_fraction: f64,
}

impl TrainConfig {
    /// Per-task defaults (batch, dropout, L2) with 100 epochs and patience 25.
    pub fn for_task(task: Task) -> Self {
        let (batch_size, dropout_rate, l2_strength) = match task {
            Task::A => (16, 0.3, 0.001),
            Task::B => (25, 0.2, 0.05),
            Task::C => (32, 0.3, 0.0001),
        };
        Self {
            batch_size,
            dropout_rate,
            l2_strength,
            max_epochs: 100,
            patience: 25,
            rmsprop: Rmsprop::default(),
            seed: 0,
            validation_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rmsprop.validate()?;
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout rate must lie in [0, 1)".into()));
        }
        if !(self.l2_strength >= 0.0) {
            return Err(Error::Config("l2 strength must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub stopped_early: bool,
}

/// Validation objective: mean cross-entropy plus the same weight penalty the
/// optimizer minimizes.
fn validation_objective(net: &TaskNetwork, rows: &[&LabeledRow], l2: f64) -> Result<f64> {
    let mut total = 0.0;
    for r in rows {
        let out = net.forward(&r.row, Mode::Infer)?;
        total += bce_with_logit(out.logit, r.label);
    }
    Ok(total / rows.len() as f64 + l2 * net.params.weight_sq_norm())
}

fn check_labels(rows: &[LabeledRow]) -> Result<()> {
    for (i, r) in rows.iter().enumerate() {
        if r.label != 0.0 && r.label != 1.0 {
            return Err(Error::NonBinaryLabel { row: i, label: r.label });
        }
    }
    Ok(())
}

/// Trains with RMSprop and early stopping on the regularized validation loss;
/// returns the best snapshot.
///
/// Without a `dev` set, a seeded `validation_fraction` of `train` is held
/// out (all of it is reused when it is too small to split).
pub fn train_dnn(
    train: &[LabeledRow],
    dev: Option<&[LabeledRow]>,
    spec: TaskNetworkSpec,
    cfg: &TrainConfig,
) -> Result<(TaskNetwork, TrainTrace)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_labels(train)?;
    if let Some(d) = dev {
        check_labels(d)?;
    }
    let mut rng = crate::rng(cfg.seed);
    let mut net = TaskNetwork::init(spec, cfg.seed)?;
    for r in train {
        net.spec.check_row(&r.row)?;
    }

    let (fit_rows, val_rows): (Vec<&LabeledRow>, Vec<&LabeledRow>) = match dev {
        Some(d) if !d.is_empty() => (train.iter().collect(), d.iter().collect()),
        _ => {
            let n_val = (train.len() as f64 * cfg.validation_fraction).round() as usize;
            if n_val == 0 || n_val >= train.len() {
                (train.iter().collect(), train.iter().collect())
            } else {
                let mut idx: Vec<usize> = (0..train.len()).collect();
                idx.shuffle(&mut rng);
                let (val, fit) = idx.split_at(n_val);
                let mut val = val.to_vec();
                let mut fit = fit.to_vec();
                val.sort_unstable();
                fit.sort_unstable();
                (
                    fit.into_iter().map(|i| &train[i]).collect(),
                    val.into_iter().map(|i| &train[i]).collect(),
                )
            }
        }
    };

    let mut cache = Params::zeros_like(&net.params);
    let mut best = net.clone();
    let mut trace = TrainTrace {
        best_validation_loss: validation_objective(&net, &val_rows, cfg.l2_strength)?,
        ..TrainTrace::default()
    };
    let mut wait = 0;
    let mut order: Vec<usize> = (0..fit_rows.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&FeatureRow, f64)> = chunk.iter().map(|&i| (&fit_rows[i].row, fit_rows[i].label)).collect();
            let dropout = (cfg.dropout_rate > 0.0).then_some((cfg.dropout_rate, &mut rng));
            let (loss, grad) = net.loss_and_gradient_mode(&batch, cfg.l2_strength, dropout)?;
            if loss.is_nan() {
                return Err(Error::NanLoss { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            for ((p, g), c) in net
                .params
                .layers
                .iter_mut()
                .zip(&grad.layers)
                .zip(cache.layers.iter_mut())
            {
                cfg.rmsprop.step(&mut p.weights, &g.weights, &mut c.weights)?;
                cfg.rmsprop.step(&mut p.bias, &g.bias, &mut c.bias)?;
            }
        }
        let val_loss = validation_objective(&net, &val_rows, cfg.l2_strength)?;
        if val_loss.is_nan() {
            return Err(Error::NanLoss { epoch });
        }
        trace.epochs.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / batches as f64,
            validation_loss: val_loss,
        });
        if val_loss < trace.best_validation_loss {
            trace.best_validation_loss = val_loss;
            trace.best_epoch = epoch;
            best = net.clone();
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience.max(1) {
                trace.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    Ok((best, trace))
}

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::AdamState;
use crate::data::{batch_iter, Dataset, Sample};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::model::Model;
use crate::ndcore::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub early_stop_patience: usize,
    pub l2_embedding: f64,
    pub seed: u64,
    /// Per-task loss weights; missing entries count as 1.
    pub task_loss_weights: Option<Vec<f64>>,
    /// Learning rates tried by the grid runner; `learning_rate` is ignored
    /// when set.
    pub lr_grid: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 10,
            early_stop_patience: 2,
            l2_embedding: 1e-6,
            seed: 0,
            task_loss_weights: None,
            lr_grid: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let lr_ok = |lr: f64| lr > 0.0 && lr.is_finite();
        if !lr_ok(self.learning_rate) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if let Some(grid) = &self.lr_grid {
            if grid.is_empty() || !grid.iter().all(|&lr| lr_ok(lr)) {
                return Err(Error::Config("lr_grid needs positive learning rates".into()));
            }
        }
        if !(self.l2_embedding >= 0.0 && self.l2_embedding.is_finite()) {
            return Err(Error::Config(format!("l2_embedding must be non-negative, got {}", self.l2_embedding)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(w) = &self.task_loss_weights {
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Config("task_loss_weights must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn task_weights(&self, num_tasks: usize) -> Vec<f64> {
        (0..num_tasks)
            .map(|t| self.task_loss_weights.as_ref().and_then(|w| w.get(t).copied()).unwrap_or(1.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean of the batch objectives.
    pub train_loss: f64,
    /// Validation AUC per predicted task, in [`Model::predicted_tasks`] order.
    pub val_auc: Vec<Option<f64>>,
    pub val_avg_auc: Option<f64>,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Parameters of the selected epoch (the initialisation when no epoch
    /// ran or none had a defined validation AUC).
    pub best: ParamStore,
    pub best_epoch: Option<usize>,
    pub best_val_avg_auc: Option<f64>,
    pub log: Vec<EpochLog>,
}

/// Validation AUC per predicted task and their mean.
pub fn validation_auc(model: &Model, store: &ParamStore, val: &Dataset, batch_size: usize) -> Result<(Vec<Option<f64>>, Option<f64>)> {
    let preds = model.predict(store, val, batch_size)?;
    let per_task: Vec<Option<f64>> = model
        .predicted_tasks()
        .iter()
        .map(|&t| match auc(&preds[t], &val.labels(t)) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    let avg = per_task
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    Ok((per_task, avg))
}

/// Trains `store` in place and returns the best-by-validation parameters.
///
/// Each epoch reshuffles the training set with a generator seeded from
/// `config.seed` and the epoch number, runs one Adam step per batch on the
/// summed task losses plus the embedding penalty, then scores the
/// validation set. Training stops once `early_stop_patience` consecutive
/// epochs fail to beat the best validation average AUC.
pub fn fit(model: &Model, store: &mut ParamStore, train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if train.schema != *model.schema() || val.schema != *model.schema() {
        return Err(Error::Config("dataset schema differs from the model's".into()));
    }
    if train.num_tasks() != model.num_tasks() || val.num_tasks() != model.num_tasks() {
        return Err(Error::Config(format!(
            "model has {} tasks, data has {} (train) / {} (val)",
            model.num_tasks(),
            train.num_tasks(),
            val.num_tasks()
        )));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let weights = config.task_weights(model.num_tasks());
    let mut adam = AdamState::new(store);
    let mut best = store.clone();
    let mut best_epoch = None;
    let mut best_auc: Option<f64> = None;
    let mut log: Vec<EpochLog> = Vec::new();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let batches = batch_iter(train.len(), config.batch_size, true, config.seed.wrapping_add(epoch as u64));
        let mut loss_sum = 0.0;
        for (step, batch) in batches.iter().enumerate() {
            let samples: Vec<&Sample> = batch.iter().map(|&i| &train.samples[i]).collect();
            store.zero_grads();
            let mut fwd = model.forward(store, &samples)?;
            let loss = model.objective(&mut fwd, store, &samples, &weights, config.l2_embedding)?;
            let value = fwd.tape.value(loss).get(0, 0);
            if !value.is_finite() {
                return Err(Error::numeric(format!("epoch {epoch} step {step}"), format!("training loss is {value}")));
            }
            fwd.tape.backward(loss, store)?;
            adam.step(store, config.learning_rate)
                .map_err(|e| Error::numeric(format!("epoch {epoch} step {step}"), e.to_string()))?;
            loss_sum += value * batch.len() as f64;
        }
        let (val_auc, val_avg) = validation_auc(model, store, val, config.batch_size)?;
        let improved = match (val_avg, best_auc) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            best = store.clone();
            best_epoch = Some(epoch);
            best_auc = val_avg;
            stale = 0;
        } else {
            stale += 1;
        }
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_auc,
            val_avg_auc: val_avg,
            selected: false,
        });
        if stale > config.early_stop_patience {
            break;
        }
    }
    if let Some(e) = best_epoch {
        log[e - 1].selected = true;
    }
    Ok(FitResult {
        best,
        best_epoch,
        best_val_avg_auc: best_auc,
        log,
    })
}

/// `epoch,train_loss,val_auc_task{t}…,val_avg_auc,selected`; undefined
/// AUCs are left blank.
pub fn training_log_csv(tasks: &[usize], log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss");
    for t in tasks {
        write!(out, ",val_auc_task{t}").expect("write to string");
    }
    out.push_str(",val_avg_auc,selected\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for e in log {
        write!(out, "{},{}", e.epoch, e.train_loss).expect("write to string");
        for a in &e.val_auc {
            write!(out, ",{}", opt(*a)).expect("write to string");
        }
        writeln!(out, ",{},{}", opt(e.val_avg_auc), u8::from(e.selected)).expect("write to string");
    }
    out
}

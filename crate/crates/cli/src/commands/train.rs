use std::path::Path;

use stem_core::data::{frequency_filter, Dataset, Remap};
use stem_core::model::{Checkpoint, Model};
use stem_core::train::{fit, training_log_csv};

use super::write_resolved;
use crate::artifacts::{load_split, write_file, Manifest, BEST_POINTER, CHECKPOINT_FILE, MANIFEST, REMAP_FILE};
use crate::config::{RunConfig, SplitName};
use crate::error::{CliError, Result};

struct RunSummary {
    best_epoch: Option<usize>,
    best_val_avg_auc: Option<f64>,
}

/// Trains one model, or one per rate of `train.lr_grid`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.train.to_train_config(cfg.seed).validate()?;
    let (remap, train) = frequency_filter(&load_split(&cfg.data, SplitName::Train)?, cfg.data.min_count)?;
    let val = remap.apply(&load_split(&cfg.data, SplitName::Val)?)?;
    if val.num_tasks() != train.num_tasks() {
        return Err(CliError::Config(format!(
            "train data has {} tasks, validation data has {}",
            train.num_tasks(),
            val.num_tasks()
        )));
    }
    if let Some(w) = &cfg.train.task_loss_weights {
        if w.len() != train.num_tasks() {
            return Err(CliError::Config(format!(
                "task_loss_weights has {} entries, data has {} tasks",
                w.len(),
                train.num_tasks()
            )));
        }
    }
    let mut resolved = cfg.clone();
    resolved.out_dir = Some(out.to_path_buf());
    resolved.model.gate_input = Some(cfg.model.resolved_gate_input());
    if resolved.model.field_task_specific.is_none() {
        resolved.model.field_task_specific = Some(vec![true; train.schema.num_fields()]);
    }

    match cfg.train.lr_grid.clone() {
        None => {
            let s = train_one(&resolved, &train, &val, &remap, out)?;
            println!("best epoch {:?}, validation avg AUC {:?}", s.best_epoch, s.best_val_avg_auc);
        }
        Some(grid) => {
            let mut table = String::from("learning_rate,run,best_epoch,best_val_avg_auc\n");
            let mut best: Option<(String, Option<f64>)> = None;
            for lr in grid {
                let name = format!("lr_{lr}");
                let dir = out.join(&name);
                let mut sub = resolved.clone();
                sub.train.learning_rate = lr;
                sub.train.lr_grid = None;
                sub.out_dir = Some(dir.clone());
                let s = train_one(&sub, &train, &val, &remap, &dir)?;
                let opt = |v: Option<String>| v.unwrap_or_default();
                table.push_str(&format!(
                    "{lr},{name},{},{}\n",
                    opt(s.best_epoch.map(|e| e.to_string())),
                    opt(s.best_val_avg_auc.map(|a| a.to_string()))
                ));
                println!("{name}: best epoch {:?}, validation avg AUC {:?}", s.best_epoch, s.best_val_avg_auc);
                let better = match (&best, s.best_val_avg_auc) {
                    (None, _) => true,
                    (Some((_, None)), Some(_)) => true,
                    (Some((_, Some(b))), Some(a)) => a > *b,
                    _ => false,
                };
                if better {
                    best = Some((name, s.best_val_avg_auc));
                }
            }
            let (name, _) = best.expect("lr_grid is non-empty after validation");
            write_file(&out.join("grid.csv"), table)?;
            write_file(&out.join(BEST_POINTER), format!("{name}\n"))?;
            println!("best: {name}");
        }
    }
    write_resolved(&resolved, out)
}

fn train_one(cfg: &RunConfig, train: &Dataset, val: &Dataset, remap: &Remap, dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let (model, mut store) = Model::new(&cfg.model, &train.schema, train.num_tasks(), cfg.seed)?;
    let result = fit(&model, &mut store, train, val, &cfg.train.to_train_config(cfg.seed))?;
    Checkpoint::new(&model, &result.best, cfg.seed).save(&dir.join(CHECKPOINT_FILE))?;
    remap.save(&dir.join(REMAP_FILE))?;
    write_file(&dir.join("train_log.csv"), training_log_csv(model.predicted_tasks(), &result.log))?;

    let mut m = Manifest::default();
    m.set("variant", model.variant().name())
        .set("seed", cfg.seed)
        .set("learning_rate", cfg.train.learning_rate)
        .set("epochs_run", result.log.len())
        .set("best_epoch", result.best_epoch.map_or_else(String::new, |e| e.to_string()))
        .set(
            "best_val_avg_auc",
            result.best_val_avg_auc.map_or_else(String::new, |a| a.to_string()),
        )
        .set("num_train", train.len())
        .set("num_val", val.len())
        .set("num_parameters", result.best.iter().map(|(_, p)| p.value.len()).sum::<usize>());
    write_file(&dir.join(MANIFEST), m.render())?;
    write_resolved(cfg, dir)?;
    Ok(RunSummary {
        best_epoch: result.best_epoch,
        best_val_avg_auc: result.best_val_avg_auc,
    })
}

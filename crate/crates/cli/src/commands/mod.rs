mod analyze;
mod eval;
mod gen_data;
mod train;

use std::path::{Path, PathBuf};

pub use analyze::analyze;
pub use eval::{bucket_split, eval};
pub use gen_data::gen_data;
pub use train::train;

use stem_core::data::Dataset;
use stem_core::model::Variant;

use crate::artifacts::{load_split, sparse_and_dense_tasks, write_file, LoadedRun, RESOLVED_CONFIG};
use crate::config::{DataSection, RunConfig, SplitName};
use crate::error::{CliError, Result};

fn write_resolved(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_file(&dir.join(RESOLVED_CONFIG), cfg.to_toml()?)
}

/// Fills unset focus tasks: A is the sparsest training task, B the densest.
fn resolve_focus(a: Option<usize>, b: Option<usize>, data: &DataSection) -> Result<(usize, usize)> {
    let (a, b) = match (a, b) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let train = load_split(data, SplitName::Train)?;
            let (sparse, dense) = sparse_and_dense_tasks(&train);
            let a = a.unwrap_or(sparse);
            let b = b.unwrap_or(if dense == a { sparse } else { dense });
            (a, b)
        }
    };
    if a == b {
        return Err(CliError::Config(format!("task_a and task_b must differ, both are {a}")));
    }
    Ok((a, b))
}

/// Single-task checkpoints keyed by their task.
fn open_single_task(paths: &[PathBuf]) -> Result<Vec<(usize, LoadedRun)>> {
    paths
        .iter()
        .map(|p| {
            let run = LoadedRun::open(p)?;
            match run.model.variant() {
                Variant::SingleTask(t) => Ok((t, run)),
                other => Err(CliError::Config(format!(
                    "{} is a {} checkpoint, expected single_task",
                    p.display(),
                    other.name()
                ))),
            }
        })
        .collect()
}

fn find_task<'a>(singles: &'a [(usize, LoadedRun)], task: usize, purpose: &str) -> Result<&'a LoadedRun> {
    singles
        .iter()
        .find(|(t, _)| *t == task)
        .map(|(_, r)| r)
        .ok_or_else(|| CliError::Config(format!("{purpose} needs a single-task checkpoint for task {task}")))
}

/// Scores of one task from a single-task reference.
fn reference_scores(run: &LoadedRun, task: usize, raw: &Dataset, batch_size: usize) -> Result<Vec<f64>> {
    let (_, mut preds) = run.predict(raw, batch_size)?;
    Ok(std::mem::take(&mut preds[task]))
}

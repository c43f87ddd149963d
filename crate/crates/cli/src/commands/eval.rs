use std::fmt::Write as _;
use std::path::Path;

use stem_core::data::Dataset;
use stem_core::eval::output::{buckets_csv, metrics_csv, predictions_csv, report_rows, subset_rows};
use stem_core::eval::{evaluate_subsets, mtl_gain, subset_split, BucketSplit, MetricsReport, Subset, SubsetAuc};

use super::{find_task, open_single_task, reference_scores, resolve_focus, write_resolved};
use crate::artifacts::{load_split, write_file, LoadedRun};
use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// Global metrics of one checkpoint, plus the MTL gain and the per-subset
/// focus-task AUC when single-task references are given.
pub fn eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let e = &cfg.eval;
    let path = e
        .checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Config("eval needs eval.checkpoint".into()))?;
    let run = LoadedRun::open(path)?;
    let raw = load_split(&cfg.data, e.split)?;
    let (data, preds) = run.predict(&raw, e.batch_size)?;
    let tasks = run.model.predicted_tasks().to_vec();
    let labels: Vec<Vec<u8>> = tasks.iter().map(|&t| data.labels(t)).collect();
    let scores: Vec<Vec<f64>> = tasks.iter().map(|&t| preds[t].clone()).collect();
    let triples: Vec<(usize, &[f64], &[u8])> = tasks
        .iter()
        .enumerate()
        .map(|(k, &t)| (t, scores[k].as_slice(), labels[k].as_slice()))
        .collect();
    let mut report = MetricsReport::from_predictions(&triples)?;

    let singles = open_single_task(&e.single_task)?;
    if !singles.is_empty() {
        let mut references = Vec::with_capacity(singles.len());
        for (t, s) in &singles {
            let (d, p) = s.predict(&raw, e.batch_size)?;
            references.push(MetricsReport::from_predictions(&[(*t, &p[*t], &d.labels(*t))])?);
        }
        report.mtl_gain = Some(mtl_gain(&report, &references)?);
    }
    let mut rows = report_rows(&report);

    let mut resolved = cfg.clone();
    resolved.out_dir = Some(out.to_path_buf());
    if e.buckets {
        let (a, b) = resolve_focus(e.task_a, e.task_b, &cfg.data)?;
        resolved.eval.task_a = Some(a);
        resolved.eval.task_b = Some(b);
        if !tasks.contains(&a) {
            return Err(CliError::Config(format!(
                "{} does not predict focus task {a}",
                path.display()
            )));
        }
        let split = split_stage(cfg, &singles, &raw, a, b)?;
        let per_subset = evaluate_subsets(&preds[a], &data.labels(a), &split)?;
        rows.extend(subset_rows(a, &per_subset));
        write_file(&out.join("buckets.csv"), buckets_csv(&split))?;
        write_file(&out.join("subset_auc.csv"), subset_table(&split, &per_subset, e.n_buckets))?;
        print!("{}", subset_table(&split, &per_subset, e.n_buckets));
    }
    write_file(&out.join("metrics.csv"), metrics_csv(&rows))?;
    write_file(&out.join("predictions.csv"), predictions_csv(&tasks, &scores, &labels))?;
    write_resolved(&resolved, out)?;
    print!("{}", report.to_table());
    Ok(())
}

/// The bucket stage of `eval` alone: subsets from the single-task
/// references, with the task-A reference's AUC inside each.
pub fn bucket_split(cfg: &RunConfig, out: &Path) -> Result<()> {
    let e = &cfg.eval;
    let (a, b) = resolve_focus(e.task_a, e.task_b, &cfg.data)?;
    let singles = open_single_task(&e.single_task)?;
    let raw = load_split(&cfg.data, e.split)?;
    let split = split_stage(cfg, &singles, &raw, a, b)?;
    let run_a = find_task(&singles, a, "bucket split")?;
    let (data, preds) = run_a.predict(&raw, e.batch_size)?;
    let per_subset = evaluate_subsets(&preds[a], &data.labels(a), &split)?;
    write_file(&out.join("buckets.csv"), buckets_csv(&split))?;
    write_file(&out.join("subset_auc.csv"), subset_table(&split, &per_subset, e.n_buckets))?;
    let mut resolved = cfg.clone();
    resolved.out_dir = Some(out.to_path_buf());
    resolved.eval.task_a = Some(a);
    resolved.eval.task_b = Some(b);
    write_resolved(&resolved, out)?;
    print!("{}", subset_table(&split, &per_subset, e.n_buckets));
    Ok(())
}

fn split_stage(
    cfg: &RunConfig,
    singles: &[(usize, LoadedRun)],
    raw: &Dataset,
    a: usize,
    b: usize,
) -> Result<BucketSplit> {
    let e = &cfg.eval;
    let run_a = find_task(singles, a, "bucket split")?;
    let run_b = find_task(singles, b, "bucket split")?;
    let scores_a = reference_scores(run_a, a, raw, e.batch_size)?;
    let scores_b = reference_scores(run_b, b, raw, e.batch_size)?;
    Ok(subset_split(&scores_a, &scores_b, e.lo, e.hi, e.n_buckets)?)
}

/// `subset,delta_min,delta_max,size,positives,auc`, bounds inclusive.
fn subset_table(split: &BucketSplit, per_subset: &[SubsetAuc], n_buckets: usize) -> String {
    let top = n_buckets as i32 - 1;
    let mut out = String::from("subset,delta_min,delta_max,size,positives,auc\n");
    for s in per_subset {
        let (min, max) = match s.subset {
            Subset::BOverwhelming => (-top, split.lo),
            Subset::Comparable => (split.lo + 1, split.hi),
            Subset::AOverwhelming => (split.hi + 1, top),
        };
        let auc = s.auc.map_or_else(String::new, |a| a.to_string());
        writeln!(out, "{},{min},{max},{},{},{auc}", s.subset.name(), s.size, s.positives).expect("write to string");
    }
    out
}

//! CSV renderings of evaluation results.

use std::fmt::Write;

use super::{BucketSplit, MetricsReport, SubsetAuc};

/// One `task,metric,subset,value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub task: String,
    pub metric: String,
    pub subset: String,
    pub value: f64,
}

impl MetricRow {
    pub fn new(task: impl Into<String>, metric: impl Into<String>, subset: impl Into<String>, value: f64) -> Self {
        MetricRow {
            task: task.into(),
            metric: metric.into(),
            subset: subset.into(),
            value,
        }
    }
}

/// Global rows of a report; undefined metrics are left out.
pub fn report_rows(report: &MetricsReport) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for t in &report.tasks {
        if let Some(a) = t.auc {
            rows.push(MetricRow::new(t.task.to_string(), "auc", "all", a));
        }
        rows.push(MetricRow::new(t.task.to_string(), "logloss", "all", t.logloss));
    }
    if let Some(a) = report.average_auc {
        rows.push(MetricRow::new("avg", "auc", "all", a));
    }
    if let Some(g) = report.mtl_gain {
        rows.push(MetricRow::new("avg", "mtl_gain", "all", g));
    }
    rows
}

/// Per-subset rows (`auc`, `size`, `positives`) for one focus task.
pub fn subset_rows(task: usize, per_subset: &[SubsetAuc]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for s in per_subset {
        let name = s.subset.name();
        rows.push(MetricRow::new(task.to_string(), "size", name, s.size as f64));
        rows.push(MetricRow::new(task.to_string(), "positives", name, s.positives as f64));
        if let Some(a) = s.auc {
            rows.push(MetricRow::new(task.to_string(), "auc", name, a));
        }
    }
    rows
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("task,metric,subset,value\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.task, r.metric, r.subset, r.value).expect("write to string");
    }
    out
}

/// `sample_idx,task,score,label`, sample-major.
pub fn predictions_csv(tasks: &[usize], scores: &[Vec<f64>], labels: &[Vec<u8>]) -> String {
    let mut out = String::from("sample_idx,task,score,label\n");
    let n = scores.first().map_or(0, Vec::len);
    for i in 0..n {
        for (k, &t) in tasks.iter().enumerate() {
            writeln!(out, "{i},{t},{},{}", scores[k][i], labels[k][i]).expect("write to string");
        }
    }
    out
}

/// `sample_idx,bucket_a,bucket_b,delta,subset`.
pub fn buckets_csv(split: &BucketSplit) -> String {
    let mut out = String::from("sample_idx,bucket_a,bucket_b,delta,subset\n");
    for i in 0..split.len() {
        writeln!(
            out,
            "{i},{},{},{},{}",
            split.bucket_a[i],
            split.bucket_b[i],
            split.delta[i],
            split.subset[i].name()
        )
        .expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::subset_split;

    #[test]
    fn metrics_csv_layout() {
        let report = MetricsReport::from_predictions(&[(0, &[0.2, 0.7], &[0, 1])]).unwrap();
        let text = metrics_csv(&report_rows(&report));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "task,metric,subset,value");
        assert_eq!(lines[1], "0,auc,all,1");
        assert!(lines[2].starts_with("0,logloss,all,0.2899"));
        assert_eq!(lines[3], "avg,auc,all,1");
    }

    #[test]
    fn predictions_are_sample_major() {
        let text = predictions_csv(&[0, 1], &[vec![0.5, 0.25], vec![0.125, 1.0]], &[vec![1, 0], vec![0, 1]]);
        assert_eq!(
            text,
            "sample_idx,task,score,label\n0,0,0.5,1\n0,1,0.125,0\n1,0,0.25,0\n1,1,1,1\n"
        );
    }

    #[test]
    fn bucket_csv_names_subsets() {
        let split = subset_split(&[0.1, 0.9], &[0.9, 0.1], -1, 0, 2).unwrap();
        assert_eq!(
            buckets_csv(&split),
            "sample_idx,bucket_a,bucket_b,delta,subset\n0,0,1,-1,b_overwhelming\n1,1,0,1,a_overwhelming\n"
        );
    }
}

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LOGLOSS_CLAMP: f64 = 1e-12;

fn check_inputs(op: &'static str, scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(op, format!("{} scores", scores.len()), format!("{} labels", labels.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::numeric(op, format!("non-finite score {s}")));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Config(format!("{op}: label {y} is not 0/1")));
    }
    Ok(())
}

/// Average 1-based rank of every score, ties sharing the mean of their
/// positions.
fn average_ranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Area under the ROC curve as the Mann–Whitney statistic, ties counted
/// half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs("auc", scores, labels)?;
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auc needs both positive and negative labels"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Mean binary cross-entropy with scores clamped into
/// `[LOGLOSS_CLAMP, 1 − LOGLOSS_CLAMP]`.
pub fn logloss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs("logloss", scores, labels)?;
    if scores.is_empty() {
        return Err(Error::EmptyInput("logloss over zero samples"));
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let p = s.clamp(LOGLOSS_CLAMP, 1.0 - LOGLOSS_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: usize,
    /// `None` when the labels hold a single class.
    pub auc: Option<f64>,
    pub logloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tasks: Vec<TaskMetrics>,
    /// Mean of the per-task AUCs; `None` if any of them is undefined.
    pub average_auc: Option<f64>,
    pub mtl_gain: Option<f64>,
}

impl MetricsReport {
    /// Metrics for each `(task, scores, labels)` triple, in the given order.
    pub fn from_predictions(per_task: &[(usize, &[f64], &[u8])]) -> Result<Self> {
        if per_task.is_empty() {
            return Err(Error::EmptyInput("metrics report without tasks"));
        }
        let mut tasks = Vec::with_capacity(per_task.len());
        for &(task, scores, labels) in per_task {
            let a = match auc(scores, labels) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            tasks.push(TaskMetrics {
                task,
                auc: a,
                logloss: logloss(scores, labels)?,
            });
        }
        let average_auc = tasks
            .iter()
            .map(|t| t.auc)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        Ok(MetricsReport {
            tasks,
            average_auc,
            mtl_gain: None,
        })
    }

    pub fn task(&self, task: usize) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|t| t.task == task)
    }

    pub fn auc(&self, task: usize) -> Option<f64> {
        self.task(task).and_then(|t| t.auc)
    }

    /// Plain-text table for terminal output.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"));
        let mut out = format!("{:<8}{:>12}{:>12}\n", "task", "auc", "logloss");
        for t in &self.tasks {
            out.push_str(&format!("{:<8}{:>12}{:>12.6}\n", t.task, fmt(t.auc), t.logloss));
        }
        out.push_str(&format!("{:<8}{:>12}\n", "avg", fmt(self.average_auc)));
        if let Some(g) = self.mtl_gain {
            out.push_str(&format!("{:<8}{:>12.6}\n", "mtl_gain", g));
        }
        out
    }
}

/// Average AUC of `model` minus the average of the single-task AUCs on the
/// same tasks. Each model task is looked up in whichever single-task
/// report covers it.
pub fn mtl_gain(model: &MetricsReport, single_task: &[MetricsReport]) -> Result<f64> {
    let avg = model
        .average_auc
        .ok_or(Error::UndefinedMetric("model average auc"))?;
    let mut reference = Vec::with_capacity(model.tasks.len());
    for t in &model.tasks {
        let found = single_task
            .iter()
            .find_map(|r| r.task(t.task))
            .ok_or_else(|| Error::Config(format!("no single-task report covers task {}", t.task)))?;
        reference.push(found.auc.ok_or(Error::UndefinedMetric("single-task auc"))?);
    }
    let covered: usize = single_task.iter().map(|r| r.tasks.len()).sum();
    if covered != model.tasks.len() {
        return Err(Error::Config(format!(
            "single-task reports cover {covered} tasks, model has {}",
            model.tasks.len()
        )));
    }
    Ok(avg - reference.iter().sum::<f64>() / reference.len() as f64)
}

pub(crate) fn cmp_scores(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[a].total_cmp(&scores[b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1, 0.2, 0.7, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auc(&[], &[]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut done = 0;
        while done < 1000 {
            let n = rng.random_range(2..=200);
            // coarse grid forces many ties
            let levels = rng.random_range(1..=20);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
            if labels.iter().all(|&y| y == labels[0]) {
                continue;
            }
            let fast = auc(&scores, &labels).unwrap();
            assert!((fast - brute_force_auc(&scores, &labels)).abs() <= 1e-12);
            done += 1;
        }
    }

    #[test]
    fn logloss_examples() {
        assert!(logloss(&[1.0, 0.0, 1.0], &[1, 0, 1]).unwrap() <= 1e-11);
        assert!((logloss(&[0.5; 4], &[1, 0, 0, 1]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let v = logloss(&[0.75, 0.75], &[1, 0]).unwrap();
        assert!((v - (-(0.75f64).ln() - (0.25f64).ln()) / 2.0).abs() < 1e-15);
        assert!((v - 0.836988).abs() < 1e-6);
        assert!(matches!(logloss(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        assert!(matches!(auc(&[0.1], &[0, 1]), Err(Error::Shape { .. })));
    }

    fn report(aucs: &[(usize, f64)]) -> MetricsReport {
        MetricsReport {
            tasks: aucs
                .iter()
                .map(|&(task, a)| TaskMetrics {
                    task,
                    auc: Some(a),
                    logloss: 0.0,
                })
                .collect(),
            average_auc: Some(aucs.iter().map(|x| x.1).sum::<f64>() / aucs.len() as f64),
            mtl_gain: None,
        }
    }

    #[test]
    fn mtl_gain_examples() {
        let single = [report(&[(0, 0.8433)]), report(&[(1, 0.8433)])];
        assert_eq!(mtl_gain(&report(&[(0, 0.8433), (1, 0.8433)]), &single).unwrap(), 0.0);
        let stem = report(&[(0, 0.8480), (1, 0.8480)]);
        assert!((mtl_gain(&stem, &single).unwrap() - 0.0047).abs() < 1e-12);
        let sb = report(&[(0, 0.8234), (1, 0.8234)]);
        assert!((mtl_gain(&sb, &single).unwrap() + 0.0199).abs() < 1e-12);
        assert!(matches!(mtl_gain(&stem, &single[..1]), Err(Error::Config(_))));
    }

    #[test]
    fn report_marks_undefined_auc_absent() {
        let s = [0.2, 0.4];
        let r = MetricsReport::from_predictions(&[(0, &s, &[1, 1]), (1, &s, &[0, 1])]).unwrap();
        assert_eq!(r.auc(0), None);
        assert_eq!(r.auc(1), Some(1.0));
        assert_eq!(r.average_auc, None);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            data in proptest::collection::vec((-5.0f64..5.0, 0u8..2), 2..80)
        ) {
            let (scores, labels): (Vec<f64>, Vec<u8>) = data.into_iter().unzip();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let t: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 3.0).collect();
            prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&t, &labels).unwrap());
        }

        #[test]
        fn auc_complements_under_label_flip(
            data in proptest::collection::vec(0u8..2, 2..80), seed in 0u64..1000
        ) {
            prop_assume!(data.contains(&0) && data.contains(&1));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // distinct scores: a shuffled ramp
            let mut scores: Vec<f64> = (0..data.len()).map(|i| i as f64).collect();
            for i in (1..scores.len()).rev() {
                scores.swap(i, rng.random_range(0..=i));
            }
            let flipped: Vec<u8> = data.iter().map(|y| 1 - y).collect();
            let sum = auc(&scores, &data).unwrap() + auc(&scores, &flipped).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

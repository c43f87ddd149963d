use serde::{Deserialize, Serialize};

use super::metrics::{auc, cmp_scores};
use crate::error::{Error, Result};

pub const DEFAULT_LO: i32 = -4;
pub const DEFAULT_HI: i32 = 6;
pub const DEFAULT_BUCKETS: usize = 10;

/// Bucket index per sample after ranking scores ascending (ties broken by
/// original index). Bucket `i` receives ranks `[i·n/nb, (i+1)·n/nb)`.
pub fn equal_freq_buckets(scores: &[f64], n_buckets: usize) -> Result<Vec<usize>> {
    if n_buckets < 2 {
        return Err(Error::Config(format!("n_buckets must be at least 2, got {n_buckets}")));
    }
    if scores.len() < n_buckets {
        return Err(Error::Config(format!(
            "{} samples cannot fill {n_buckets} buckets",
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::numeric("equal_freq_buckets", format!("non-finite score {s}")));
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(cmp_scores(scores));
    let mut buckets = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        buckets[i] = rank * n_buckets / n;
    }
    Ok(buckets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    BOverwhelming,
    Comparable,
    AOverwhelming,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::BOverwhelming, Subset::Comparable, Subset::AOverwhelming];

    pub fn name(self) -> &'static str {
        match self {
            Subset::BOverwhelming => "b_overwhelming",
            Subset::Comparable => "comparable",
            Subset::AOverwhelming => "a_overwhelming",
        }
    }

    /// `δ ≤ lo` → B, `lo < δ ≤ hi` → comparable, `δ > hi` → A.
    pub fn classify(delta: i32, lo: i32, hi: i32) -> Subset {
        if delta <= lo {
            Subset::BOverwhelming
        } else if delta <= hi {
            Subset::Comparable
        } else {
            Subset::AOverwhelming
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketSplit {
    pub bucket_a: Vec<usize>,
    pub bucket_b: Vec<usize>,
    /// `bucket_a − bucket_b`.
    pub delta: Vec<i32>,
    pub subset: Vec<Subset>,
    pub lo: i32,
    pub hi: i32,
}

impl BucketSplit {
    pub fn len(&self) -> usize {
        self.subset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subset.is_empty()
    }

    /// Sample indices of one subset, ascending.
    pub fn indices(&self, subset: Subset) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.subset[i] == subset).collect()
    }

    pub fn count(&self, subset: Subset) -> usize {
        self.subset.iter().filter(|&&s| s == subset).count()
    }
}

/// Splits samples by how much more confident the task-A reference model is
/// than the task-B one, measured in equal-frequency bucket steps.
pub fn subset_split(scores_a: &[f64], scores_b: &[f64], lo: i32, hi: i32, n_buckets: usize) -> Result<BucketSplit> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::shape(
            "subset_split",
            format!("{} task-A scores", scores_a.len()),
            format!("{} task-B scores", scores_b.len()),
        ));
    }
    if lo >= hi {
        return Err(Error::Config(format!("subset thresholds need lo < hi, got ({lo}, {hi}]")));
    }
    let bucket_a = equal_freq_buckets(scores_a, n_buckets)?;
    let bucket_b = equal_freq_buckets(scores_b, n_buckets)?;
    let delta: Vec<i32> = bucket_a
        .iter()
        .zip(&bucket_b)
        .map(|(&a, &b)| a as i32 - b as i32)
        .collect();
    let subset = delta.iter().map(|&d| Subset::classify(d, lo, hi)).collect();
    Ok(BucketSplit {
        bucket_a,
        bucket_b,
        delta,
        subset,
        lo,
        hi,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetAuc {
    pub subset: Subset,
    pub size: usize,
    pub positives: usize,
    /// `None` when the subset lacks one of the classes.
    pub auc: Option<f64>,
}

/// Focus-task AUC computed separately inside each subset.
pub fn evaluate_subsets(scores: &[f64], labels: &[u8], split: &BucketSplit) -> Result<Vec<SubsetAuc>> {
    if scores.len() != split.len() || labels.len() != split.len() {
        return Err(Error::shape(
            "evaluate_subsets",
            format!("split of {}", split.len()),
            format!("{} scores / {} labels", scores.len(), labels.len()),
        ));
    }
    Subset::ALL
        .iter()
        .map(|&subset| {
            let idx = split.indices(subset);
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            let a = match auc(&s, &y) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(SubsetAuc {
                subset,
                size: idx.len(),
                positives: y.iter().filter(|&&v| v == 1).count(),
                auc: a,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distinct_scores_get_their_own_bucket() {
        let scores = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0];
        let b = equal_freq_buckets(&scores, 10).unwrap();
        assert_eq!(b, vec![9, 1, 5, 3, 7, 2, 8, 4, 6, 0]);
    }

    #[test]
    fn tied_scores_fill_buckets_by_index() {
        let b = equal_freq_buckets(&[0.5; 13], 10).unwrap();
        for w in b.windows(2) {
            assert!(w[0] <= w[1]);
        }
        let mut sizes = [0; 10];
        b.iter().for_each(|&i| sizes[i] += 1);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn twenty_samples_give_pairs() {
        let scores: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let b = equal_freq_buckets(&scores, 10).unwrap();
        let mut sizes = [0; 10];
        b.iter().for_each(|&i| sizes[i] += 1);
        assert_eq!(sizes, [2; 10]);
    }

    #[test]
    fn bucket_errors() {
        assert!(matches!(equal_freq_buckets(&[0.1; 5], 10), Err(Error::Config(_))));
        assert!(matches!(equal_freq_buckets(&[0.1; 5], 1), Err(Error::Config(_))));
        assert!(matches!(equal_freq_buckets(&[0.1, f64::NAN], 2), Err(Error::Numeric { .. })));
    }

    #[test]
    fn default_range_examples() {
        assert_eq!(Subset::classify(-5, DEFAULT_LO, DEFAULT_HI), Subset::BOverwhelming);
        assert_eq!(Subset::classify(-4, DEFAULT_LO, DEFAULT_HI), Subset::BOverwhelming);
        assert_eq!(Subset::classify(0, DEFAULT_LO, DEFAULT_HI), Subset::Comparable);
        assert_eq!(Subset::classify(6, DEFAULT_LO, DEFAULT_HI), Subset::Comparable);
        assert_eq!(Subset::classify(7, DEFAULT_LO, DEFAULT_HI), Subset::AOverwhelming);
    }

    #[test]
    fn split_rejects_mismatch_and_bad_thresholds() {
        assert!(matches!(subset_split(&[0.1; 10], &[0.1; 11], -4, 6, 10), Err(Error::Shape { .. })));
        assert!(matches!(subset_split(&[0.1; 10], &[0.1; 10], 2, 2, 10), Err(Error::Config(_))));
    }

    #[test]
    fn single_subset_matches_global_auc() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.5, 0.2];
        let y = [0, 0, 1, 1, 1, 0];
        // identical references → δ = 0 everywhere
        let split = subset_split(&s, &s, -4, 6, 3).unwrap();
        let per = evaluate_subsets(&s, &y, &split).unwrap();
        assert_eq!(per[1].size, 6);
        assert_eq!(per[1].auc, Some(auc(&s, &y).unwrap()));
        assert_eq!(per[0].auc, None);
        assert_eq!(per[2].size, 0);
    }

    proptest! {
        #[test]
        fn buckets_are_monotone_and_balanced(
            scores in proptest::collection::vec(-3.0f64..3.0, 10..200), nb in 2usize..12
        ) {
            prop_assume!(scores.len() >= nb);
            let b = equal_freq_buckets(&scores, nb).unwrap();
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] < scores[j] {
                        prop_assert!(b[i] <= b[j]);
                    }
                }
            }
            let mut sizes = vec![0usize; nb];
            b.iter().for_each(|&i| sizes[i] += 1);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn split_partitions_samples(
            pairs in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 10..200),
            lo in -9i32..8, width in 1i32..10
        ) {
            let hi = (lo + width).min(9);
            prop_assume!(lo < hi);
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let split = subset_split(&a, &b, lo, hi, 10).unwrap();
            let total: usize = Subset::ALL.iter().map(|&s| split.count(s)).sum();
            prop_assert_eq!(total, a.len());
            for &d in &split.delta {
                prop_assert!((-9..=9).contains(&d));
            }
        }
    }
}

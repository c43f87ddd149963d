//! Metrics and the bucket-difference split used to locate negative
//! transfer.

mod buckets;
mod metrics;
pub mod output;

pub use buckets::{
    equal_freq_buckets, evaluate_subsets, subset_split, BucketSplit, Subset, SubsetAuc, DEFAULT_BUCKETS, DEFAULT_HI,
    DEFAULT_LO,
};
pub use metrics::{auc, logloss, mtl_gain, MetricsReport, TaskMetrics, LOGLOSS_CLAMP};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Seeded shuffle followed by contiguous slicing into train/val/test.
///
/// Part sizes are `floor(n·r_train)`, `floor(n·r_val)` and the remainder.
pub fn split(dataset: &Dataset, ratios: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (rt, rv, rs) = ratios;
    if [rt, rv, rs].iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::Config(format!("split ratios must be non-negative, got {ratios:?}")));
    }
    if (rt + rv + rs - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios sum to {}, expected 1", rt + rv + rs)));
    }
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // the epsilon absorbs products such as 0.29·100 = 28.999…
    let n_train = ((n as f64 * rt) + 1e-9).floor() as usize;
    let n_val = (((n as f64 * rv) + 1e-9).floor() as usize).min(n - n_train);
    let (a, rest) = idx.split_at(n_train);
    let (b, c) = rest.split_at(n_val);
    Ok((dataset.select(a), dataset.select(b), dataset.select(c)))
}

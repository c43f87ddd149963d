//! Distances between user and item embeddings, used to find pairs whose
//! two single-task models disagree and to compare how other tables place
//! those pairs.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// One user row and one item row of the same tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub user: usize,
    pub item: usize,
}

/// Selected pairs plus the thresholds that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub top_frac: f64,
    pub bottom_frac: f64,
    pub num_candidates: usize,
}

impl PairSet {
    /// `|S| / |candidates|`.
    pub fn fraction(&self) -> f64 {
        if self.num_candidates == 0 {
            0.0
        } else {
            self.pairs.len() as f64 / self.num_candidates as f64
        }
    }
}

/// Euclidean distance between two rows of `table`.
pub fn pair_distance(table: &Matrix, user: usize, item: usize) -> Result<f64> {
    for row in [user, item] {
        if row >= table.rows() {
            return Err(Error::Bounds {
                what: "embedding table".into(),
                row,
                len: table.rows(),
            });
        }
    }
    Ok(table
        .row(user)
        .iter()
        .zip(table.row(item))
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Distinct `(user row, item row)` combinations of the samples, in sorted
/// order. Rows are global table rows.
pub fn candidate_pairs(dataset: &Dataset, user_field: usize, item_field: usize) -> Result<Vec<Pair>> {
    let m = dataset.schema.num_fields();
    if user_field >= m || item_field >= m || user_field == item_field {
        return Err(Error::Config(format!(
            "user field {user_field} and item field {item_field} must be distinct fields below {m}"
        )));
    }
    let set: BTreeSet<Pair> = dataset
        .samples
        .iter()
        .map(|s| Pair {
            user: dataset.schema.global_row(user_field, s.features[user_field]),
            item: dataset.schema.global_row(item_field, s.features[item_field]),
        })
        .collect();
    Ok(set.into_iter().collect())
}

pub fn distances(table: &Matrix, pairs: &[Pair]) -> Result<Vec<f64>> {
    pairs.iter().map(|p| pair_distance(table, p.user, p.item)).collect()
}

/// Positions of the `k` largest (or smallest) values; ties keep the
/// earlier index ahead.
fn rank_band(values: &[f64], k: usize, largest: bool) -> Vec<bool> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let o = values[a].total_cmp(&values[b]);
        if largest {
            o.reverse()
        } else {
            o
        }
    });
    let mut mask = vec![false; values.len()];
    for &i in &order[..k] {
        mask[i] = true;
    }
    mask
}

/// Pairs in the top `top_frac` of distances under `table_a` and in the
/// bottom `bottom_frac` under `table_b`. Band sizes are
/// `floor(frac · |candidates|)`.
pub fn select_contradictory(
    candidates: &[Pair],
    table_a: &Matrix,
    table_b: &Matrix,
    top_frac: f64,
    bottom_frac: f64,
) -> Result<PairSet> {
    for f in [top_frac, bottom_frac] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("selection fraction {f} must lie in (0, 1)")));
        }
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate pairs"));
    }
    let n = candidates.len();
    let da = distances(table_a, candidates)?;
    let db = distances(table_b, candidates)?;
    let far_a = rank_band(&da, (top_frac * n as f64).floor() as usize, true);
    let near_b = rank_band(&db, (bottom_frac * n as f64).floor() as usize, false);
    let pairs = (0..n)
        .filter(|&i| far_a[i] && near_b[i])
        .map(|i| candidates[i])
        .collect();
    Ok(PairSet {
        pairs,
        top_frac,
        bottom_frac,
        num_candidates: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count_s: usize,
    pub count_all: usize,
}

/// Equal-width bins over the range of all candidate distances; the
/// selected pairs are counted on the same edges.
pub fn distance_histogram(table: &Matrix, candidates: &[Pair], selected: &[Pair], n_bins: usize) -> Result<Vec<HistogramBin>> {
    if n_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate pairs"));
    }
    let all = distances(table, candidates)?;
    let sel = distances(table, selected)?;
    let min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let max = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / n_bins as f64;
    let bin_of = |d: f64| {
        if width == 0.0 {
            0
        } else {
            (((d - min) / width).floor() as usize).min(n_bins - 1)
        }
    };
    let mut bins: Vec<HistogramBin> = (0..n_bins)
        .map(|b| HistogramBin {
            lo: min + b as f64 * width,
            hi: if b + 1 == n_bins { max } else { min + (b + 1) as f64 * width },
            count_s: 0,
            count_all: 0,
        })
        .collect();
    for d in all {
        bins[bin_of(d)].count_all += 1;
    }
    for d in sel {
        // selected pairs outside the candidate range land in the end bins
        let b = if d < min { 0 } else { bin_of(d) };
        bins[b].count_s += 1;
    }
    Ok(bins)
}

pub fn mean_distance(table: &Matrix, pairs: &[Pair]) -> Result<Option<f64>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let d = distances(table, pairs)?;
    Ok(Some(d.iter().sum::<f64>() / d.len() as f64))
}

pub const HISTOGRAM_HEADER: &str = "table_name,bin_lo,bin_hi,count_S,count_all";

/// Rows of `table_name,bin_lo,bin_hi,count_S,count_all`, without header.
pub fn histogram_rows(table_name: &str, bins: &[HistogramBin]) -> String {
    let mut out = String::new();
    for b in bins {
        writeln!(out, "{table_name},{},{},{},{}", b.lo, b.hi, b.count_s, b.count_all).expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FieldSchema, Sample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_table(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn all_pairs(users: usize, items: usize) -> Vec<Pair> {
        (0..users)
            .flat_map(|u| (0..items).map(move |i| Pair { user: u, item: users + i }))
            .collect()
    }

    #[test]
    fn distance_examples() {
        let t = Matrix::from_rows(&[&[0.0, 0.0], &[3.0, 4.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(pair_distance(&t, 0, 1).unwrap(), 5.0);
        assert_eq!(pair_distance(&t, 1, 0).unwrap(), 5.0);
        assert_eq!(pair_distance(&t, 1, 2).unwrap(), 0.0);
        assert!(matches!(pair_distance(&t, 0, 3), Err(Error::Bounds { .. })));
    }

    #[test]
    fn independent_tables_select_sixteen_percent() {
        let pairs = all_pairs(150, 150);
        assert!(pairs.len() >= 10_000);
        let a = random_table(300, 8, 1);
        let b = random_table(300, 8, 2);
        let s = select_contradictory(&pairs, &a, &b, 0.4, 0.4).unwrap();
        assert!((s.fraction() - 0.16).abs() <= 0.02, "{}", s.fraction());
    }

    #[test]
    fn same_table_selects_nothing() {
        let pairs = all_pairs(40, 40);
        let a = random_table(80, 4, 3);
        let s = select_contradictory(&pairs, &a, &a, 0.4, 0.4).unwrap();
        assert!(s.pairs.is_empty());
    }

    #[test]
    fn selection_ignores_common_scaling() {
        let pairs = all_pairs(30, 30);
        let a = random_table(60, 4, 4);
        let b = random_table(60, 4, 5);
        let scaled = a.map(|x| 3.5 * x);
        assert_eq!(
            select_contradictory(&pairs, &a, &b, 0.4, 0.3).unwrap().pairs,
            select_contradictory(&pairs, &scaled, &b, 0.4, 0.3).unwrap().pairs
        );
    }

    #[test]
    fn fraction_bounds_are_checked() {
        let pairs = all_pairs(3, 3);
        let a = random_table(6, 2, 6);
        assert!(matches!(select_contradictory(&pairs, &a, &a, 1.0, 0.4), Err(Error::Config(_))));
        assert!(matches!(select_contradictory(&pairs, &a, &a, 0.4, 0.0), Err(Error::Config(_))));
        assert!(matches!(select_contradictory(&[], &a, &a, 0.4, 0.4), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn histogram_counts_and_shared_edges() {
        let pairs = all_pairs(20, 20);
        let a = random_table(40, 3, 7);
        let b = random_table(40, 3, 8);
        let s = select_contradictory(&pairs, &a, &b, 0.4, 0.4).unwrap();
        let bins = distance_histogram(&a, &pairs, &s.pairs, 12).unwrap();
        assert_eq!(bins.len(), 12);
        assert_eq!(bins.iter().map(|b| b.count_all).sum::<usize>(), pairs.len());
        assert_eq!(bins.iter().map(|b| b.count_s).sum::<usize>(), s.pairs.len());
        for w in bins.windows(2) {
            assert_eq!(w[0].hi, w[1].lo);
        }
    }

    #[test]
    fn equal_distances_fill_one_bin() {
        let t = Matrix::from_rows(&[&[0.0], &[1.0], &[2.0]]).unwrap();
        let pairs = [Pair { user: 0, item: 1 }, Pair { user: 1, item: 2 }];
        let bins = distance_histogram(&t, &pairs, &pairs[..1], 4).unwrap();
        assert_eq!(bins[0].count_all, 2);
        assert_eq!(bins[0].count_s, 1);
        assert!(bins[1..].iter().all(|b| b.count_all == 0));
    }

    #[test]
    fn candidates_are_distinct_sample_pairs() {
        let schema = FieldSchema::new(vec![3, 4, 2]).unwrap();
        let s = |u, i| Sample {
            features: vec![u, i, 1],
            labels: vec![0],
        };
        let ds = Dataset::new(schema, vec![s(1, 2), s(2, 3), s(1, 2)], vec!["y0".into()]).unwrap();
        let c = candidate_pairs(&ds, 0, 1).unwrap();
        assert_eq!(c, vec![Pair { user: 1, item: 5 }, Pair { user: 2, item: 6 }]);
        assert!(candidate_pairs(&ds, 0, 0).is_err());
    }
}

//! Latent-factor click generator with a tunable cross-task contradiction.
//!
//! Task 0 draws user and item latents `u`, `i`. Every other task mixes the
//! user side with fresh noise, `u_t = ρ·u + √(1−ρ²)·ε`, and keeps the item
//! latents, so the preference logits `⟨u_t, i⟩` correlate with coefficient
//! `ρ`: `ρ = 1` copies task 0's preferences and `ρ < 0` makes the tasks
//! disagree. Labels are `Bernoulli(sigmoid(⟨u_t, i⟩ + bias_t))`.
//!
//! Mixing the item latents as well would make the logits correlate with `ρ²`
//! and erase the sign of the contradiction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{default_task_names, Dataset, FieldSchema, Sample};
use crate::error::{Error, Result};
use crate::ndcore::ops::sigmoid;

/// How later tasks' user latents derive from task 0's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UserMixing {
    /// `u_t = ρ·u + √(1−ρ²)·ε`.
    #[default]
    Gaussian,
    /// `u_t = s·u` with a per-user sign `s = −1` drawn with probability
    /// `(1−ρ)/2`, so `E[s] = ρ`.
    SignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_extra_fields: usize,
    pub extra_field_cardinality: usize,
    pub latent_dim: usize,
    /// Cross-task latent correlation in [-1, 1].
    pub rho: f64,
    pub user_mixing: UserMixing,
    /// Standard deviation of the preference logit `⟨u_t, i_t⟩`.
    pub signal_scale: f64,
    /// Logit offset per task; overridden by `target_positive_ratio`.
    pub task_bias: Vec<f64>,
    /// When set, biases are calibrated so the expected positive ratio of each
    /// task over the drawn samples equals the target.
    pub target_positive_ratio: Option<Vec<f64>>,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 300,
            num_items: 300,
            num_extra_fields: 2,
            extra_field_cardinality: 50,
            latent_dim: 12,
            rho: -0.8,
            user_mixing: UserMixing::Gaussian,
            signal_scale: 2.0,
            task_bias: vec![0.0, 0.0],
            target_positive_ratio: Some(vec![0.28, 0.05]),
            num_samples: 200_000,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn num_tasks(&self) -> usize {
        self.target_positive_ratio
            .as_ref()
            .map_or(self.task_bias.len(), Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(-1.0..=1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [-1, 1]", self.rho));
        }
        if self.num_users == 0 || self.num_items == 0 || self.latent_dim == 0 {
            return bad("num_users, num_items and latent_dim must be positive".into());
        }
        if self.num_extra_fields > 0 && self.extra_field_cardinality == 0 {
            return bad("extra_field_cardinality must be positive".into());
        }
        if !(self.signal_scale.is_finite() && self.signal_scale >= 0.0) {
            return bad(format!("signal_scale {} must be finite and non-negative", self.signal_scale));
        }
        if self.num_tasks() == 0 {
            return bad("at least one task is required".into());
        }
        if let Some(t) = &self.target_positive_ratio {
            if t.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
                return bad(format!("target positive ratios {t:?} must lie in (0, 1)"));
            }
        } else if self.task_bias.iter().any(|b| !b.is_finite()) {
            return bad("task_bias must be finite".into());
        }
        Ok(())
    }
}

/// Generated dataset plus the ground truth behind it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    /// Bias actually used per task.
    pub bias: Vec<f64>,
    /// `probabilities[t][n]`: Bernoulli parameter of task `t` for sample `n`.
    pub probabilities: Vec<Vec<f64>>,
}

impl SyntheticData {
    /// Pearson correlation of two tasks' label probabilities across samples.
    pub fn probability_correlation(&self, a: usize, b: usize) -> f64 {
        pearson(&self.probabilities[a], &self.probabilities[b])
    }

    /// Fraction of samples where task `a` is likely (`p_a > hi`) while task
    /// `b` is unlikely (`p_b < lo`).
    pub fn contradiction_fraction(&self, a: usize, b: usize, hi: f64, lo: f64) -> f64 {
        let n = self.probabilities[a].len();
        if n == 0 {
            return 0.0;
        }
        let hits = self.probabilities[a]
            .iter()
            .zip(&self.probabilities[b])
            .filter(|(&pa, &pb)| pa > hi && pb < lo)
            .count();
        hits as f64 / n as f64
    }
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return if sxx == syy { 1.0 } else { 0.0 };
    }
    sxy / (sxx * syy).sqrt()
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn mix(base: &[Vec<f64>], rho: f64, rng: &mut ChaCha8Rng, scale: f64) -> Vec<Vec<f64>> {
    let noise_w = (1.0 - rho * rho).max(0.0).sqrt();
    base.iter()
        .map(|row| {
            row.iter()
                .map(|&v| rho * v + noise_w * scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

fn flip(base: &[Vec<f64>], rho: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let p_flip = (1.0 - rho) / 2.0;
    base.iter()
        .map(|row| {
            let s = if rng.random::<f64>() < p_flip { -1.0 } else { 1.0 };
            row.iter().map(|&v| s * v).collect()
        })
        .collect()
}

/// Finds `b` with `mean(sigmoid(logit + b)) = target` by bisection.
fn calibrate_bias(logits: &[f64], target: f64) -> f64 {
    let mean_at = |b: f64| logits.iter().map(|&z| sigmoid(z + b)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draw order: task-0 user latents, item latents, then for each later task
/// its user noise, then per sample (user, item, extra fields),
/// then per sample the labels of every task.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let t = cfg.num_tasks();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // entry std so that ⟨u, i⟩ has std `signal_scale`
    let entry_std = (cfg.signal_scale / (cfg.latent_dim as f64).sqrt()).sqrt();

    let users0 = normal_matrix(&mut rng, cfg.num_users, cfg.latent_dim, entry_std);
    let items = normal_matrix(&mut rng, cfg.num_items, cfg.latent_dim, entry_std);
    let mut users = vec![users0];
    for _ in 1..t {
        let u = match cfg.user_mixing {
            UserMixing::Gaussian => mix(&users[0], cfg.rho, &mut rng, entry_std),
            UserMixing::SignFlip => flip(&users[0], cfg.rho, &mut rng),
        };
        users.push(u);
    }

    let m = 2 + cfg.num_extra_fields;
    let mut features = Vec::with_capacity(cfg.num_samples);
    for _ in 0..cfg.num_samples {
        let mut f = Vec::with_capacity(m);
        f.push(rng.random_range(1..=cfg.num_users as u32));
        f.push(rng.random_range(1..=cfg.num_items as u32));
        for _ in 0..cfg.num_extra_fields {
            f.push(rng.random_range(1..=cfg.extra_field_cardinality as u32));
        }
        features.push(f);
    }

    let logits: Vec<Vec<f64>> = (0..t)
        .map(|task| {
            features
                .iter()
                .map(|f| {
                    let u = &users[task][f[0] as usize - 1];
                    let i = &items[f[1] as usize - 1];
                    u.iter().zip(i).map(|(a, b)| a * b).sum()
                })
                .collect()
        })
        .collect();
    let bias: Vec<f64> = match &cfg.target_positive_ratio {
        Some(targets) if cfg.num_samples > 0 => logits
            .iter()
            .zip(targets)
            .map(|(l, &target)| calibrate_bias(l, target))
            .collect(),
        _ => cfg.task_bias.clone(),
    };
    let probabilities: Vec<Vec<f64>> = logits
        .iter()
        .zip(&bias)
        .map(|(l, &b)| l.iter().map(|&z| sigmoid(z + b)).collect())
        .collect();

    let mut samples = Vec::with_capacity(cfg.num_samples);
    for (n, f) in features.into_iter().enumerate() {
        let labels = (0..t)
            .map(|task| u8::from(rng.random::<f64>() < probabilities[task][n]))
            .collect();
        samples.push(Sample { features: f, labels });
    }

    let mut vocab = vec![cfg.num_users + 1, cfg.num_items + 1];
    vocab.extend(std::iter::repeat_n(cfg.extra_field_cardinality + 1, cfg.num_extra_fields));
    let dataset = Dataset::new(FieldSchema::new(vocab)?, samples, default_task_names(t))?;
    Ok(SyntheticData {
        dataset,
        bias,
        probabilities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rho: f64, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            num_users: 200,
            num_items: 200,
            num_samples: 20_000,
            rho,
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn bitwise_reproducible() {
        let a = generate_synthetic(&small(-0.8, 3)).unwrap();
        let b = generate_synthetic(&small(-0.8, 3)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.probabilities, b.probabilities);
        let c = generate_synthetic(&small(-0.8, 4)).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn rho_one_copies_preferences() {
        let cfg = SyntheticConfig {
            target_positive_ratio: Some(vec![0.2, 0.2]),
            ..small(1.0, 5)
        };
        let d = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.probabilities[0], d.probabilities[1]);
        assert!((d.probability_correlation(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho_zero_is_roughly_independent() {
        let d = generate_synthetic(&small(0.0, 5)).unwrap();
        assert!(d.probability_correlation(0, 1).abs() < 0.1);
    }

    #[test]
    fn correlation_ordered_in_rho() {
        let rhos = [-0.8, -0.3, 0.0, 0.5, 0.9];
        let corr: Vec<f64> = rhos
            .iter()
            .map(|&r| generate_synthetic(&small(r, 8)).unwrap().probability_correlation(0, 1))
            .collect();
        assert!(corr.windows(2).all(|w| w[0] < w[1]), "{corr:?}");
    }

    #[test]
    fn calibrated_ratios_and_contradiction() {
        let d = generate_synthetic(&small(-0.8, 2)).unwrap();
        assert!((d.dataset.positive_ratio(0) - 0.28).abs() < 0.02);
        assert!((d.dataset.positive_ratio(1) - 0.05).abs() < 0.02);
        // p_0 > 0.7 while p_1 < 0.1 happens on a measurable share of samples
        let frac = d.contradiction_fraction(0, 1, 0.7, 0.1);
        assert!(frac > 0.01, "{frac}");
    }

    #[test]
    fn ids_in_range() {
        let d = generate_synthetic(&small(0.3, 1)).unwrap();
        for s in &d.dataset.samples {
            assert!(s.features.iter().all(|&id| id >= 1));
        }
        assert_eq!(d.dataset.schema.num_fields(), 4);
    }

    #[test]
    fn validation() {
        assert!(SyntheticConfig { rho: 1.5, ..small(0.0, 0) }.validate().is_err());
        assert!(SyntheticConfig {
            target_positive_ratio: Some(vec![0.0, 0.5]),
            ..small(0.0, 0)
        }
        .validate()
        .is_err());
    }
}

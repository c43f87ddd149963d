//! TOML run configuration shared by every subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stem_core::data::SyntheticConfig;
use stem_core::eval::{DEFAULT_BUCKETS, DEFAULT_HI, DEFAULT_LO};
use stem_core::model::ModelConfig;
use stem_core::train::TrainConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds model initialisation and batch shuffling.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Val,
    #[default]
    Test,
}

/// Where the data lives. `dir` holds `train.csv`, `val.csv` and `test.csv`;
/// the explicit paths override it file by file. `synthetic` is read by
/// `gen-data` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Train/val/test ratios used by `gen-data`.
    pub split: [f64; 3],
    pub split_seed: u64,
    /// Features seen fewer times than this in training map to ID 0.
    pub min_count: usize,
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dir: None,
            train: None,
            val: None,
            test: None,
            split: [0.8, 0.1, 0.1],
            split_seed: 0,
            min_count: 1,
            synthetic: None,
        }
    }
}

impl DataSection {
    pub fn path(&self, split: SplitName) -> Result<PathBuf> {
        let (explicit, file) = match split {
            SplitName::Train => (&self.train, "train.csv"),
            SplitName::Val => (&self.val, "val.csv"),
            SplitName::Test => (&self.test, "test.csv"),
        };
        explicit
            .clone()
            .or_else(|| self.dir.as_ref().map(|d| d.join(file)))
            .ok_or_else(|| CliError::Config(format!("data section needs `dir` or an explicit path for {file}")))
    }
}

/// Training options; the shuffle seed is the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub l2_embedding: f64,
    pub task_loss_weights: Option<Vec<f64>>,
    /// Trains once per rate into `lr_<rate>/` and points `best` at the
    /// winner.
    pub lr_grid: Option<Vec<f64>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            early_stop_patience: d.early_stop_patience,
            l2_embedding: d.l2_embedding,
            task_loss_weights: d.task_loss_weights,
            lr_grid: d.lr_grid,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.early_stop_patience,
            l2_embedding: self.l2_embedding,
            seed,
            task_loss_weights: self.task_loss_weights.clone(),
            lr_grid: self.lr_grid.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Checkpoint file, run directory, or grid directory.
    pub checkpoint: Option<PathBuf>,
    /// Single-task references for the MTL gain and the bucket split.
    pub single_task: Vec<PathBuf>,
    /// Split the evaluated samples into subsets by the single-task
    /// references of `task_a` and `task_b`.
    pub buckets: bool,
    /// Focus task; defaults to the task with the lowest training positive
    /// ratio.
    pub task_a: Option<usize>,
    /// Defaults to the task with the highest training positive ratio.
    pub task_b: Option<usize>,
    pub lo: i32,
    pub hi: i32,
    pub n_buckets: usize,
    pub split: SplitName,
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            checkpoint: None,
            single_task: Vec::new(),
            buckets: false,
            task_a: None,
            task_b: None,
            lo: DEFAULT_LO,
            hi: DEFAULT_HI,
            n_buckets: DEFAULT_BUCKETS,
            split: SplitName::Test,
            batch_size: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Single-task checkpoints; those of `task_a` and `task_b` define the
    /// contradictory pairs.
    pub single_task: Vec<PathBuf>,
    /// Multi-task checkpoints whose tables are histogrammed.
    pub checkpoints: Vec<PathBuf>,
    pub task_a: Option<usize>,
    pub task_b: Option<usize>,
    /// Tables to histogram per multi-task checkpoint (`shared`, `task1`, …);
    /// all of them when unset.
    pub tables: Option<Vec<String>>,
    pub top_frac: f64,
    pub bottom_frac: f64,
    pub n_bins: usize,
    pub user_field: usize,
    pub item_field: usize,
    /// Split whose (user, item) pairs are the candidates.
    pub split: SplitName,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            single_task: Vec::new(),
            checkpoints: Vec::new(),
            task_a: None,
            task_b: None,
            tables: None,
            top_frac: 0.4,
            bottom_frac: 0.4,
            n_bins: 20,
            user_field: 0,
            item_field: 1,
            split: SplitName::Test,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::ConfigFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize resolved config: {e}")))
    }

    /// TOML integers are signed, so seeds above `i64::MAX` could not be
    /// echoed back.
    pub fn validate(&self) -> Result<()> {
        let mut seeds = vec![("seed", self.seed), ("data.split_seed", self.data.split_seed)];
        if let Some(s) = &self.data.synthetic {
            seeds.push(("data.synthetic.seed", s.seed));
        }
        for (name, v) in seeds {
            if i64::try_from(v).is_err() {
                return Err(CliError::Config(format!("{name} = {v} does not fit a TOML integer")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.model, ModelConfig::default());
        assert_eq!(c.train, TrainSection::default());
        assert_eq!((c.eval.lo, c.eval.hi), (-4, 6));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nlearning_rte = 0.1").is_err());
        assert!(RunConfig::from_toml("[model]\nvariant = \"stem\"\nexperts = 3").is_err());
        assert!(RunConfig::from_toml("[data.synthetic]\nrh = 0.5").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"
seed = 3
out_dir = "runs/a"
[data]
dir = "data"
[data.synthetic]
rho = 0.5
[model]
variant = "single_task"
task = 1
[train]
lr_grid = [0.001, 0.0005]
[eval]
single_task = ["runs/st0", "runs/st1"]
buckets = true
"#;
        let c = RunConfig::from_toml(text).unwrap();
        let echoed = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&echoed).unwrap(), c);
    }

    #[test]
    fn data_paths_fall_back_to_dir() {
        let d = DataSection {
            dir: Some("d".into()),
            test: Some("other.csv".into()),
            ..DataSection::default()
        };
        assert_eq!(d.path(SplitName::Train).unwrap(), PathBuf::from("d/train.csv"));
        assert_eq!(d.path(SplitName::Test).unwrap(), PathBuf::from("other.csv"));
        assert!(DataSection::default().path(SplitName::Val).is_err());
    }

    #[test]
    fn oversized_seed_is_rejected() {
        let c = RunConfig {
            seed: u64::MAX,
            ..RunConfig::from_toml("").unwrap()
        };
        assert!(c.validate().is_err());
    }
}

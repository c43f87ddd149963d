//! Output directories, flat manifests and checkpoint lookup.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use stem_core::data::{load_csv, Dataset, Remap};
use stem_core::model::{Checkpoint, Model};
use stem_core::ndcore::ParamStore;

use crate::config::{DataSection, SplitName};
use crate::error::{CliError, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const REMAP_FILE: &str = "remap.csv";
pub const BEST_POINTER: &str = "best";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const MANIFEST: &str = "manifest.txt";

/// Creates `dir`, refusing a non-empty one unless `force` is set.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !force {
            return Err(CliError::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// `key=value` lines in insertion order.
#[derive(Debug, Default, Clone)]
pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    pub fn set(&mut self, key: impl Display, value: impl Display) -> &mut Self {
        self.lines.push(format!("{key}={value}"));
        self
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    /// Parses `key=value` lines back into pairs.
    pub fn parse(text: &str) -> Vec<(String, String)> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }
}

/// Raw (unfiltered) dataset of one split.
pub fn load_split(data: &DataSection, split: SplitName) -> Result<Dataset> {
    Ok(load_csv(&data.path(split)?, None)?)
}

/// A restored checkpoint together with the remap its training data used.
pub struct LoadedRun {
    pub path: PathBuf,
    pub model: Model,
    pub params: ParamStore,
    pub checkpoint: Checkpoint,
    pub remap: Remap,
}

impl LoadedRun {
    /// Accepts a checkpoint file, a run directory, or a grid directory
    /// holding a `best` pointer.
    pub fn open(path: &Path) -> Result<Self> {
        let file = checkpoint_file(path)?;
        let checkpoint = Checkpoint::load(&file)?;
        let (model, params) = checkpoint.restore()?;
        let remap_path = file.parent().unwrap_or(Path::new(".")).join(REMAP_FILE);
        let remap = Remap::load(&remap_path)?;
        if remap.schema() != model.schema() {
            return Err(CliError::Config(format!(
                "{} does not match the schema of {}",
                remap_path.display(),
                file.display()
            )));
        }
        Ok(LoadedRun {
            path: file,
            model,
            params,
            checkpoint,
            remap,
        })
    }

    /// Scores of every predicted task on `raw`, remapped first.
    pub fn predict(&self, raw: &Dataset, batch_size: usize) -> Result<(Dataset, Vec<Vec<f64>>)> {
        let data = self.remap.apply(raw)?;
        if data.num_tasks() != self.model.num_tasks() {
            return Err(CliError::Config(format!(
                "{} was trained on {} tasks, data has {}",
                self.path.display(),
                self.model.num_tasks(),
                data.num_tasks()
            )));
        }
        let preds = self.model.predict(&self.params, &data, batch_size)?;
        Ok((data, preds))
    }
}

fn checkpoint_file(path: &Path) -> Result<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let pointer = path.join(BEST_POINTER);
    if pointer.is_file() {
        let name = fs::read_to_string(&pointer).map_err(|e| CliError::io(&pointer, e))?;
        return Ok(path.join(name.trim()).join(CHECKPOINT_FILE));
    }
    Ok(path.join(CHECKPOINT_FILE))
}

/// Lowest and highest positive-ratio tasks of `data`; ties go to the lower
/// index.
pub fn sparse_and_dense_tasks(data: &Dataset) -> (usize, usize) {
    let ratios: Vec<f64> = (0..data.num_tasks()).map(|t| data.positive_ratio(t)).collect();
    let mut sparse = 0;
    let mut dense = 0;
    for (t, &r) in ratios.iter().enumerate() {
        if r < ratios[sparse] {
            sparse = t;
        }
        if r > ratios[dense] {
            dense = t;
        }
    }
    (sparse, dense)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_renders_and_parses() {
        let mut m = Manifest::default();
        m.set("seed", 7).set("rho", -0.8);
        assert_eq!(m.render(), "seed=7\nrho=-0.8\n");
        assert_eq!(Manifest::parse(&m.render())[1], ("rho".to_string(), "-0.8".to_string()));
    }

    #[test]
    fn non_empty_out_dir_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        prepare_out_dir(dir.path(), false).unwrap();
        write_file(&dir.path().join("x"), "1").unwrap();
        assert!(matches!(prepare_out_dir(dir.path(), false), Err(CliError::Config(_))));
        prepare_out_dir(dir.path(), true).unwrap();
        prepare_out_dir(&dir.path().join("new/nested"), false).unwrap();
    }

    #[test]
    fn grid_directory_follows_best_pointer() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(checkpoint_file(dir.path()).unwrap(), dir.path().join(CHECKPOINT_FILE));
        write_file(&dir.path().join(BEST_POINTER), "lr_0.001\n").unwrap();
        assert_eq!(
            checkpoint_file(dir.path()).unwrap(),
            dir.path().join("lr_0.001").join(CHECKPOINT_FILE)
        );
    }
}

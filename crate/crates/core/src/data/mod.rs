//! Samples, CSV ingestion, frequency filtering, splits, minibatching and the
//! synthetic contradictory-preference generator.

mod batch;
mod csv;
mod filter;
mod split;
mod synthetic;

pub use batch::batch_iter;
pub use csv::{load_csv, write_csv};
pub use filter::{frequency_filter, Remap};
pub use split::split;
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData, UserMixing};

use crate::error::{Error, Result};

/// Per-field vocabulary sizes. Index 0 of every field is the default feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    vocab_sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl FieldSchema {
    pub fn new(vocab_sizes: Vec<usize>) -> Result<Self> {
        if vocab_sizes.is_empty() {
            return Err(Error::Config("schema needs at least one field".into()));
        }
        if let Some(f) = vocab_sizes.iter().position(|&v| v == 0) {
            return Err(Error::Config(format!("field {f} has an empty vocabulary")));
        }
        let offsets = vocab_sizes
            .iter()
            .scan(0, |acc, &v| {
                let o = *acc;
                *acc += v;
                Some(o)
            })
            .collect();
        Ok(FieldSchema { vocab_sizes, offsets })
    }

    pub fn num_fields(&self) -> usize {
        self.vocab_sizes.len()
    }

    pub fn vocab_sizes(&self) -> &[usize] {
        &self.vocab_sizes
    }

    pub fn vocab_size(&self, field: usize) -> usize {
        self.vocab_sizes[field]
    }

    /// Total feature count N across fields.
    pub fn total_features(&self) -> usize {
        self.vocab_sizes.iter().sum()
    }

    /// Row of `(field, id)` in an N-row embedding table.
    pub fn global_row(&self, field: usize, id: u32) -> usize {
        self.offsets[field] + id as usize
    }

    pub fn field_offset(&self, field: usize) -> usize {
        self.offsets[field]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub features: Vec<u32>,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: FieldSchema,
    pub samples: Vec<Sample>,
    pub task_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset after checking every sample against the schema.
    pub fn new(schema: FieldSchema, samples: Vec<Sample>, task_names: Vec<String>) -> Result<Self> {
        let m = schema.num_fields();
        let t = task_names.len();
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != m || s.labels.len() != t {
                return Err(Error::Config(format!(
                    "sample {i} has {} features / {} labels, expected {m} / {t}",
                    s.features.len(),
                    s.labels.len()
                )));
            }
            for (f, &id) in s.features.iter().enumerate() {
                if id as usize >= schema.vocab_size(f) {
                    return Err(Error::Bounds {
                        what: format!("field {f} vocabulary"),
                        row: id as usize,
                        len: schema.vocab_size(f),
                    });
                }
            }
            if let Some(&y) = s.labels.iter().find(|&&y| y > 1) {
                return Err(Error::Config(format!("sample {i} has label {y}")));
            }
        }
        Ok(Dataset {
            schema,
            samples,
            task_names,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.task_names.len()
    }

    /// Subset in the given index order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            task_names: self.task_names.clone(),
        }
    }

    pub fn labels(&self, task: usize) -> Vec<u8> {
        self.samples.iter().map(|s| s.labels[task]).collect()
    }

    pub fn positive_ratio(&self, task: usize) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let pos = self.samples.iter().filter(|s| s.labels[task] == 1).count();
        pos as f64 / self.samples.len() as f64
    }
}

pub(crate) fn default_task_names(t: usize) -> Vec<String> {
    (0..t).map(|i| format!("y{i}")).collect()
}

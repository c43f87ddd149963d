use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Dataset, FieldSchema, Sample};
use crate::error::{Error, Result};

/// Per-field old-ID → new-ID table produced by [`frequency_filter`].
///
/// IDs at or beyond a field's old vocabulary map to the default ID 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Remap {
    fields: Vec<Vec<u32>>,
    schema: FieldSchema,
}

impl Remap {
    /// Schema of remapped data.
    pub fn schema(&self) -> &FieldSchema {
        &self.schema
    }

    pub fn map(&self, field: usize, old: u32) -> u32 {
        self.fields[field].get(old as usize).copied().unwrap_or(0)
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.schema.num_fields() != self.fields.len() {
            return Err(Error::Config(format!(
                "remap has {} fields, dataset has {}",
                self.fields.len(),
                dataset.schema.num_fields()
            )));
        }
        let samples = dataset
            .samples
            .iter()
            .map(|s| Sample {
                features: s.features.iter().enumerate().map(|(f, &id)| self.map(f, id)).collect(),
                labels: s.labels.clone(),
            })
            .collect();
        Dataset::new(self.schema.clone(), samples, dataset.task_names.clone())
    }

    /// `field,old_id,new_id` CSV, one row per old ID.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("field,old_id,new_id\n");
        for (f, table) in self.fields.iter().enumerate() {
            for (old, new) in table.iter().enumerate() {
                let _ = writeln!(out, "{f},{old},{new}");
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("field,old_id,new_id") {
            return Err(Error::Parse {
                row: 1,
                detail: "expected header field,old_id,new_id".into(),
            });
        }
        let mut fields: Vec<Vec<u32>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = i + 2;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<usize> = line
                .split(',')
                .map(|c| c.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    row,
                    detail: format!("bad remap row {line:?}"),
                })?;
            let [f, old, new] = parts[..] else {
                return Err(Error::Parse {
                    row,
                    detail: "expected 3 columns".into(),
                });
            };
            if fields.len() <= f {
                fields.resize(f + 1, Vec::new());
            }
            let table = &mut fields[f];
            if table.len() <= old {
                table.resize(old + 1, 0);
            }
            table[old] = new as u32;
        }
        Self::from_tables(fields)
    }

    fn from_tables(fields: Vec<Vec<u32>>) -> Result<Self> {
        let vocab = fields
            .iter()
            .map(|t| t.iter().copied().max().unwrap_or(0) as usize + 1)
            .collect();
        Ok(Remap {
            schema: FieldSchema::new(vocab)?,
            fields,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Maps features seen fewer than `min_count` times in `train` to their
/// field's default ID 0 and re-indexes survivors densely from 1 in ascending
/// old-ID order. Counting is per field; ID 0 is always the default.
pub fn frequency_filter(train: &Dataset, min_count: usize) -> Result<(Remap, Dataset)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("frequency_filter on empty dataset"));
    }
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let schema = &train.schema;
    let mut counts: Vec<Vec<usize>> = schema.vocab_sizes().iter().map(|&v| vec![0; v]).collect();
    for s in &train.samples {
        for (f, &id) in s.features.iter().enumerate() {
            counts[f][id as usize] += 1;
        }
    }
    let tables = counts
        .iter()
        .map(|c| {
            let mut next = 1u32;
            c.iter()
                .enumerate()
                .map(|(old, &n)| {
                    if old == 0 || n < min_count {
                        0
                    } else {
                        next += 1;
                        next - 1
                    }
                })
                .collect()
        })
        .collect();
    let remap = Remap::from_tables(tables)?;
    let filtered = remap.apply(train)?;
    Ok((remap, filtered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::csv::parse_csv;
    use proptest::prelude::*;

    fn ds(rows: &[(u32, u32)]) -> Dataset {
        let mut text = String::from("f0,f1,y0\n");
        for (a, b) in rows {
            text.push_str(&format!("{a},{b},0\n"));
        }
        parse_csv(&text, None).unwrap()
    }

    #[test]
    fn min_count_one_only_reindexes() {
        let d = ds(&[(2, 5), (7, 5), (2, 1)]);
        let (remap, out) = frequency_filter(&d, 1).unwrap();
        assert_eq!(remap.map(0, 2), 1);
        assert_eq!(remap.map(0, 7), 2);
        assert_eq!(remap.map(1, 1), 1);
        assert_eq!(remap.map(1, 5), 2);
        assert_eq!(out.samples[1].features, vec![2, 2]);
        assert_eq!(out.schema.vocab_sizes(), &[3, 3]);
    }

    #[test]
    fn rare_feature_goes_to_default() {
        let mut rows = vec![(7, 1); 3];
        rows.extend(vec![(4, 1); 10]);
        let (remap, out) = frequency_filter(&ds(&rows), 10).unwrap();
        assert_eq!(remap.map(0, 7), 0);
        assert_eq!(remap.map(0, 4), 1);
        assert_eq!(out.samples[0].features[0], 0);
        // unseen at test time
        assert_eq!(remap.map(0, 1000), 0);
    }

    #[test]
    fn five_survivors_vocab_six() {
        let rows: Vec<(u32, u32)> = [3, 9, 11, 12, 40].iter().map(|&a| (a, 1)).collect();
        let (remap, _) = frequency_filter(&ds(&rows), 1).unwrap();
        assert_eq!(remap.schema().vocab_size(0), 6);
        let mapped: Vec<u32> = [3, 9, 11, 12, 40].iter().map(|&a| remap.map(0, a)).collect();
        assert_eq!(mapped, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn empty_is_error() {
        let d = parse_csv("f0,y0\n", None).unwrap();
        assert!(matches!(frequency_filter(&d, 10), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn remap_csv_round_trip() {
        let d = ds(&[(2, 5), (7, 5), (2, 1), (2, 3)]);
        let (remap, _) = frequency_filter(&d, 2).unwrap();
        let text = remap.to_csv();
        assert!(text.starts_with("field,old_id,new_id\n"));
        assert_eq!(Remap::from_csv(&text).unwrap(), remap);
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(rows in prop::collection::vec((0u32..12, 0u32..6), 1..80), min_count in 1usize..6) {
            let d = ds(&rows);
            let (_, once) = frequency_filter(&d, min_count).unwrap();
            let (remap2, twice) = frequency_filter(&once, min_count).unwrap();
            prop_assert_eq!(&once.samples, &twice.samples);
            for f in 0..2 {
                for id in 0..once.schema.vocab_size(f) as u32 {
                    let used = once.samples.iter().any(|s| s.features[f] == id);
                    if used {
                        prop_assert_eq!(remap2.map(f, id), id);
                    }
                }
            }
        }
    }
}

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Dataset, FieldSchema, Sample};
use crate::error::{Error, Result};

/// Reads a `f0,…,f{M-1},y0,…,y{T-1}` integer CSV.
///
/// Row numbers in errors are 1-based file lines (the header is line 1).
/// Without `schema_hint`, each field's vocabulary is its max ID + 1.
pub fn load_csv(path: &Path, schema_hint: Option<&FieldSchema>) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema_hint)
}

pub(crate) fn parse_csv(text: &str, schema_hint: Option<&FieldSchema>) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput("csv without header"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();

    let mut feature_cols = Vec::new();
    let mut label_cols = Vec::new();
    for (c, name) in columns.iter().enumerate() {
        let parsed = name
            .strip_prefix('f')
            .map(|n| (true, n))
            .or_else(|| name.strip_prefix('y').map(|n| (false, n)));
        match parsed.and_then(|(is_f, n)| n.parse::<usize>().ok().map(|i| (is_f, i))) {
            Some((true, i)) => feature_cols.push((i, c)),
            Some((false, i)) => label_cols.push((i, c)),
            None => {
                return Err(Error::Parse {
                    row: 1,
                    detail: format!("unexpected column {name:?}"),
                })
            }
        }
    }
    feature_cols.sort_unstable();
    label_cols.sort_unstable();
    for (kind, cols) in [("f", &feature_cols), ("y", &label_cols)] {
        if cols.is_empty() {
            return Err(Error::Parse {
                row: 1,
                detail: format!("missing column {kind}0"),
            });
        }
        for (expect, &(i, _)) in cols.iter().enumerate() {
            if i != expect {
                return Err(Error::Parse {
                    row: 1,
                    detail: format!("missing column {kind}{expect}"),
                });
            }
        }
    }
    let m = feature_cols.len();
    if let Some(hint) = schema_hint {
        if hint.num_fields() != m {
            return Err(Error::Config(format!(
                "schema hint has {} fields, file has {m}",
                hint.num_fields()
            )));
        }
    }

    let mut samples = Vec::new();
    let mut max_ids = vec![0u32; m];
    for (lineno, line) in lines.enumerate().map(|(i, l)| (i + 2, l)) {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse {
                row: lineno,
                detail: format!("{} cells, expected {}", cells.len(), columns.len()),
            });
        }
        let cell = |c: usize| -> Result<u32> {
            cells[c].trim().parse::<u32>().map_err(|_| Error::Parse {
                row: lineno,
                detail: format!("non-integer cell {:?} in column {}", cells[c], columns[c]),
            })
        };
        let mut features = Vec::with_capacity(m);
        for (f, &(_, c)) in feature_cols.iter().enumerate() {
            let id = cell(c)?;
            if let Some(hint) = schema_hint {
                if id as usize >= hint.vocab_size(f) {
                    return Err(Error::Parse {
                        row: lineno,
                        detail: format!("feature id {id} exceeds field {f} vocabulary {}", hint.vocab_size(f)),
                    });
                }
            }
            max_ids[f] = max_ids[f].max(id);
            features.push(id);
        }
        let mut labels = Vec::with_capacity(label_cols.len());
        for &(t, c) in &label_cols {
            match cell(c)? {
                y @ (0 | 1) => labels.push(y as u8),
                y => {
                    return Err(Error::Parse {
                        row: lineno,
                        detail: format!("label y{t} = {y}, expected 0 or 1"),
                    })
                }
            }
        }
        samples.push(Sample { features, labels });
    }

    let schema = match schema_hint {
        Some(h) => h.clone(),
        None => FieldSchema::new(max_ids.iter().map(|&x| x as usize + 1).collect())?,
    };
    let names = label_cols.iter().map(|&(t, _)| format!("y{t}")).collect();
    Dataset::new(schema, samples, names)
}

/// Writes the dataset in the canonical CSV layout (LF line endings).
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let m = dataset.schema.num_fields();
    let header: Vec<String> = (0..m)
        .map(|f| format!("f{f}"))
        .chain((0..dataset.num_tasks()).map(|t| format!("y{t}")))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for s in &dataset.samples {
        line.clear();
        for (i, v) in s
            .features
            .iter()
            .copied()
            .chain(s.labels.iter().map(|&y| y as u32))
            .enumerate()
        {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

//! Core domain types: labeled samples, datasets, and the aggregation
//! configuration, plus the dataset CSV format.
//!
//! The CSV format is `label,f0,...,f{n-1}` with a header row, integer
//! cells only, and LF line endings. Writing a [`Dataset`] and reading it
//! back yields the same bytes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into the class set `[0, n_classes)`.
pub type ClassIndex = usize;

/// A feature vector with its class label.
///
/// The derived ordering is lexicographic over the features, then the label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: Vec<u64>,
    pub label: ClassIndex,
}

impl LabeledSample {
    pub fn new(features: Vec<u64>, label: ClassIndex) -> Self {
        Self { features, label }
    }
}

/// A training or test set viewed as a multiset of labeled samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    n_classes: usize,
    feature_dim: usize,
}

/// One unvalidated CSV row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub label: i64,
    pub features: Vec<i64>,
}

/// A parsed but unvalidated table. `feature_dim` comes from the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTable {
    pub feature_dim: usize,
    pub rows: Vec<RawRow>,
}

impl RawTable {
    /// Builds a table whose feature width is taken from the first row.
    pub fn from_rows(rows: Vec<RawRow>) -> Self {
        let feature_dim = rows.first().map_or(0, |r| r.features.len());
        Self { feature_dim, rows }
    }
}

impl Dataset {
    /// Builds a dataset from already-typed samples, checking every invariant.
    pub fn new(samples: Vec<LabeledSample>, n_classes: usize, feature_dim: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::InvalidConfig("n_classes must be positive".into()));
        }
        if feature_dim == 0 {
            return Err(Error::NoFeatures);
        }
        for (row, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(Error::RaggedRow {
                    row,
                    expected: feature_dim,
                    found: s.features.len(),
                });
            }
            if s.label >= n_classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: s.label as i64,
                    n_classes,
                });
            }
        }
        Ok(Self {
            samples,
            n_classes,
            feature_dim,
        })
    }

    pub fn empty(n_classes: usize, feature_dim: usize) -> Result<Self> {
        Self::new(Vec::new(), n_classes, feature_dim)
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<ClassIndex> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn features(&self) -> Vec<Vec<u64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    /// Same samples, wider class set. Used to align train and test sets.
    pub fn with_n_classes(mut self, n_classes: usize) -> Result<Self> {
        if n_classes < self.n_classes {
            return Err(Error::InvalidConfig(format!(
                "cannot shrink class count from {} to {}",
                self.n_classes, n_classes
            )));
        }
        self.n_classes = n_classes;
        Ok(self)
    }

    /// Reads the `label,f0,...` CSV format.
    pub fn read_csv<R: Read>(reader: R, n_classes: Option<usize>) -> Result<Self> {
        validate_dataset(read_raw_csv(reader)?, n_classes)
    }

    /// Writes the `label,f0,...` CSV format with LF line endings.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.feature_dim).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut rec = Vec::with_capacity(self.feature_dim + 1);
            rec.push(s.label.to_string());
            rec.extend(s.features.iter().map(u64::to_string));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Parses CSV text into an unvalidated table. Rows are numbered from 0,
/// excluding the header.
pub fn read_raw_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::Parse {
            row: 0,
            message: "header must start with `label`".into(),
        });
    }
    let feature_dim = header.len() - 1;
    let mut rows = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let mut cells = rec.iter().map(|cell| {
            cell.parse::<i64>().map_err(|e| Error::Parse {
                row,
                message: format!("`{cell}`: {e}"),
            })
        });
        let label = match cells.next() {
            Some(v) => v?,
            None => {
                return Err(Error::Parse {
                    row,
                    message: "empty row".into(),
                })
            }
        };
        let features = cells.collect::<Result<Vec<_>>>()?;
        rows.push(RawRow { label, features });
    }
    Ok(RawTable { feature_dim, rows })
}

/// Validates a parsed table. `n_classes` defaults to `max label + 1`
/// (at least 1 for an empty table).
pub fn validate_dataset(raw: RawTable, n_classes: Option<usize>) -> Result<Dataset> {
    if raw.feature_dim == 0 {
        return Err(Error::NoFeatures);
    }
    let mut samples = Vec::with_capacity(raw.rows.len());
    let mut max_label = 0usize;
    for (row, r) in raw.rows.into_iter().enumerate() {
        if r.features.len() != raw.feature_dim {
            return Err(Error::RaggedRow {
                row,
                expected: raw.feature_dim,
                found: r.features.len(),
            });
        }
        if let Some((column, &value)) = r.features.iter().enumerate().find(|(_, v)| **v < 0) {
            return Err(Error::NegativeFeature { row, column, value });
        }
        let label = match usize::try_from(r.label) {
            Ok(l) if n_classes.map_or(true, |n| l < n) => l,
            _ => {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: r.label,
                    n_classes: n_classes.unwrap_or(0),
                })
            }
        };
        max_label = max_label.max(label);
        samples.push(LabeledSample {
            features: r.features.into_iter().map(|v| v as u64).collect(),
            label,
        });
    }
    let n_classes = n_classes.unwrap_or(max_label + 1);
    Dataset::new(samples, n_classes, raw.feature_dim)
}

/// Sorts samples lexicographically by (features, label). The result
/// depends only on the multiset, never on input order.
pub fn canonical_sort(mut samples: Vec<LabeledSample>) -> Vec<LabeledSample> {
    samples.sort();
    samples
}

/// The `(k, d, seed)` triple plus class count. `kd = k * d` is both the
/// partition count and the base-classifier count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub n_classes: usize,
}

impl AggregationConfig {
    pub fn new(k: usize, d: usize, seed: u64, n_classes: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidConfig(format!(
                "k and d must be positive (k={k}, d={d})"
            )));
        }
        if n_classes == 0 {
            return Err(Error::InvalidConfig("n_classes must be positive".into()));
        }
        if k.checked_mul(d).is_none() {
            return Err(Error::InvalidConfig("k*d overflows".into()));
        }
        Ok(Self {
            k,
            d,
            seed,
            n_classes,
        })
    }

    pub fn kd(&self) -> usize {
        self.k * self.d
    }
}

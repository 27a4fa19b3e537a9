//! LIBSVM sparse text format.
//!
//! Each line is `label idx:val idx:val ...` with 1-based, strictly ascending
//! feature indices. Labels must be ±1; files labelled {0, 1} are accepted and
//! mapped 0 → −1, which is declared in the [`IngestReport`].

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse rows in compressed (CSR) form with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    row_ptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    labels: Vec<f64>,
    d1: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMapping {
    /// Labels were already ±1.
    Identity,
    /// Labels were {0, 1}; 0 was mapped to −1.
    ZeroToMinusOne,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub path: String,
    pub d1: usize,
    pub d2: usize,
    pub label_mapping: LabelMapping,
    pub nnz: usize,
}

impl Dataset {
    /// Builds a dataset from 0-based sparse rows.
    pub fn from_sparse_rows(rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>, d1: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut row_ptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for (line, row) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(i, v) in row {
                if i >= d1 {
                    return Err(Error::Parse {
                        line: line + 1,
                        reason: format!("feature index {} outside [1, {d1}]", i + 1),
                    });
                }
                if prev.is_some_and(|p| i <= p) {
                    return Err(Error::Parse {
                        line: line + 1,
                        reason: "feature indices must be strictly ascending".into(),
                    });
                }
                prev = Some(i);
                indices.push(i as u32);
                values.push(v);
            }
            row_ptr.push(indices.len());
        }
        if let Some((j, b)) = labels.iter().enumerate().find(|(_, b)| **b != 1.0 && **b != -1.0) {
            return Err(Error::Parse {
                line: j + 1,
                reason: format!("label {b} is not ±1"),
            });
        }
        Ok(Self {
            row_ptr,
            indices,
            values,
            labels,
            d1,
        })
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    /// Number of samples, which is also the dual dimension.
    pub fn d2(&self) -> usize {
        self.labels.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn label(&self, j: usize) -> f64 {
        self.labels[j]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// 0-based indices and values of row `j`.
    pub fn row(&self, j: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[j], self.row_ptr[j + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_dot(&self, j: usize, x: &[f64]) -> f64 {
        let (idx, val) = self.row(j);
        idx.iter().zip(val).map(|(i, v)| v * x[*i as usize]).sum()
    }

    pub fn row_norm_sq(&self, j: usize) -> f64 {
        self.row(j).1.iter().map(|v| v * v).sum()
    }

    /// Divides every feature column by its largest absolute value.
    pub fn normalize_max_abs(&mut self) {
        let mut scale = vec![0.0f64; self.d1];
        for (i, v) in self.indices.iter().zip(&self.values) {
            let s = &mut scale[*i as usize];
            *s = s.max(v.abs());
        }
        for (i, v) in self.indices.iter().zip(self.values.iter_mut()) {
            let s = scale[*i as usize];
            if s > 0.0 {
                *v /= s;
            }
        }
    }
}

/// Reads a LIBSVM file. `min_d1` widens the feature dimension when the file
/// does not use the highest index (common for test splits).
pub fn parse_libsvm(path: impl AsRef<Path>, min_d1: Option<usize>) -> Result<(Dataset, IngestReport)> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let (ds, mapping) = parse_libsvm_reader(reader, min_d1)?;
    let report = IngestReport {
        path: path.display().to_string(),
        d1: ds.d1(),
        d2: ds.d2(),
        label_mapping: mapping,
        nnz: ds.nnz(),
    };
    Ok((ds, report))
}

pub fn parse_libsvm_reader<R: BufRead>(reader: R, min_d1: Option<usize>) -> Result<(Dataset, LabelMapping)> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("bad label `{label_tok}`"),
        })?;
        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                reason: format!("expected `index:value`, found `{tok}`"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad feature index `{idx}`"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                reason: format!("bad feature value `{val}`"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    reason: "feature indices are 1-based".into(),
                });
            }
            if idx <= prev {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("non-ascending feature index {idx} after {prev}"),
                });
            }
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("non-finite feature value `{val}`"),
                });
            }
            prev = idx;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
        raw_labels.push((lineno, label));
    }

    let has_zero = raw_labels.iter().any(|(_, b)| *b == 0.0);
    let has_minus = raw_labels.iter().any(|(_, b)| *b == -1.0);
    let mapping = if has_zero && !has_minus {
        LabelMapping::ZeroToMinusOne
    } else {
        LabelMapping::Identity
    };
    let mut labels = Vec::with_capacity(raw_labels.len());
    for (lineno, b) in raw_labels {
        let mapped = match (mapping, b) {
            (_, b) if b == 1.0 => 1.0,
            (LabelMapping::Identity, b) if b == -1.0 => -1.0,
            (LabelMapping::ZeroToMinusOne, b) if b == 0.0 => -1.0,
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("label {b} is neither ±1 nor part of a {{0, 1}} labelling"),
                })
            }
        };
        labels.push(mapped);
    }
    let d1 = max_index.max(min_d1.unwrap_or(0));
    Ok((Dataset::from_sparse_rows(rows, labels, d1)?, mapping))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<(Dataset, LabelMapping)> {
        parse_libsvm_reader(Cursor::new(s), None)
    }

    #[test]
    fn parses_basic_line() {
        let (ds, map) = parse("+1 1:0.5 3:-1.2\n").unwrap();
        assert_eq!(map, LabelMapping::Identity);
        assert_eq!(ds.d1(), 3);
        assert_eq!(ds.d2(), 1);
        assert_eq!(ds.label(0), 1.0);
        assert_eq!(ds.row(0), (&[0u32, 2][..], &[0.5, -1.2][..]));
    }

    #[test]
    fn empty_feature_list() {
        let (ds, _) = parse("-1\n+1 2:1\n").unwrap();
        assert_eq!(ds.label(0), -1.0);
        assert!(ds.row(0).0.is_empty());
        assert_eq!(ds.row_dot(0, &[3.0, 4.0]), 0.0);
    }

    #[test]
    fn zero_one_labels_are_mapped() {
        let (ds, map) = parse("0 1:1\n1 2:1\n").unwrap();
        assert_eq!(map, LabelMapping::ZeroToMinusOne);
        assert_eq!(ds.labels(), &[-1.0, 1.0]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("+1 1:0.5\n-1 2:x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("+1 1:0.5\n\n-1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn non_ascending_rejected() {
        let err = parse("+1 3:1 2:1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse("+1 2:1 2:1\n").is_err());
        assert!(parse("+1 0:1\n").is_err());
    }

    #[test]
    fn unknown_label_rejected() {
        assert!(parse("2 1:1\n").is_err());
        assert!(parse("0 1:1\n-1 1:1\n").is_err());
    }

    #[test]
    fn min_dim_widens() {
        let (ds, _) = parse_libsvm_reader(Cursor::new("+1 1:1\n"), Some(123)).unwrap();
        assert_eq!(ds.d1(), 123);
    }

    #[test]
    fn max_abs_normalisation() {
        let (mut ds, _) = parse("+1 1:2 2:-4\n-1 1:-1 2:2\n").unwrap();
        ds.normalize_max_abs();
        assert_eq!(ds.row(0).1, &[1.0, -1.0]);
        assert_eq!(ds.row(1).1, &[-0.5, 0.5]);
    }
}

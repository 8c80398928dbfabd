//! Row-major numeric tables with named columns and CSV I/O.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Whether a column is treated as discrete (finite cells) or continuous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnType {
    Discrete,
    Continuous,
}

/// In-memory dataset: a header plus rows of f64 values. No missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.clone()) {
                return Err(Error::Data(format!("duplicate column `{c}`")));
            }
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(Error::Data(format!(
                    "row {i} has {} values, expected {}",
                    r.len(),
                    columns.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} contains non-finite value {v}")));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Data(format!("no column named `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Attach (or replace) a column.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        if values.len() != self.n_rows() {
            return Err(Error::Data(format!(
                "column `{name}` has {} values for {} rows",
                values.len(),
                self.n_rows()
            )));
        }
        let mut columns = self.columns.clone();
        let mut rows = self.rows.clone();
        match self.columns.iter().position(|c| c == name) {
            Some(idx) => {
                for (r, v) in rows.iter_mut().zip(&values) {
                    r[idx] = *v;
                }
            }
            None => {
                columns.push(name.to_string());
                for (r, v) in rows.iter_mut().zip(&values) {
                    r.push(*v);
                }
            }
        }
        Dataset::new(columns, rows)
    }

    /// Rows selected by index, with repetition allowed (bootstrap resampling).
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Distinct values of a column in sorted order.
    pub fn distinct(&self, name: &str) -> Result<Vec<f64>> {
        let mut vals = self.column(name)?;
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        Ok(vals)
    }

    /// Infer a column type: discrete iff every value is integral and the
    /// support has at most 20 distinct values.
    pub fn infer_type(&self, name: &str) -> Result<ColumnType> {
        let distinct = self.distinct(name)?;
        let integral = distinct.iter().all(|v| v.fract() == 0.0);
        Ok(if integral && distinct.len() <= 20 {
            ColumnType::Discrete
        } else {
            ColumnType::Continuous
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| format_value(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(f)
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
        let mut r = csv::Reader::from_reader(input);
        let columns: Vec<String> = r
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(columns.len());
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!("row {}: `{field}` is not numeric", i + 1))
                })?;
                row.push(v);
            }
            rows.push(row);
        }
        Dataset::new(columns, rows)
    }

    pub fn from_csv_path(path: &Path) -> Result<Dataset> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(f)
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        // Shortest round-trip representation.
        let mut s = format!("{v}");
        if !s.contains('.') && !s.contains('e') {
            s.push_str(".0");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let ds = Dataset::new(
            vec!["x".into(), "y".into()],
            vec![vec![0.0, 1.5], vec![1.0, -2.25]],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&buf[..]).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Dataset::new(vec!["a".into()], vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn type_inference() {
        let ds = Dataset::new(
            vec!["b".into(), "c".into()],
            vec![vec![0.0, 0.1], vec![1.0, 0.7], vec![1.0, 0.2]],
        )
        .unwrap();
        assert_eq!(ds.infer_type("b").unwrap(), ColumnType::Discrete);
        assert_eq!(ds.infer_type("c").unwrap(), ColumnType::Continuous);
    }
}

use std::path::Path;

use crate::{Error, Result};

/// Formats with 9 significant digits, printed in the shortest form that
/// round-trips the rounded value.
pub fn fmt_sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let mag = rounded.abs();
    if (1e-4..1e15).contains(&mag) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

/// In-memory CSV table, checked before it is written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Header names unique and non-empty, every row the width of the header.
    pub fn check(&self, name: &str) -> Result<()> {
        let fail = |reason: String| Error::Schema {
            file: name.to_string(),
            reason,
        };
        if self.header.is_empty() || self.header.iter().any(|h| h.is_empty()) {
            return Err(fail("empty column name".into()));
        }
        let mut seen = self.header.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.header.len() {
            return Err(fail("duplicate column name".into()));
        }
        if let Some((i, r)) = self.rows.iter().enumerate().find(|(_, r)| r.len() != self.header.len()) {
            return Err(fail(format!(
                "row {i} has {} fields, expected {}",
                r.len(),
                self.header.len()
            )));
        }
        Ok(())
    }

    /// Checks that column `col` parses as numbers that never decrease.
    pub fn check_monotone(&self, name: &str, col: usize) -> Result<()> {
        let mut prev = f64::NEG_INFINITY;
        for (i, r) in self.rows.iter().enumerate() {
            let x: f64 = r[col].parse().map_err(|_| Error::Schema {
                file: name.to_string(),
                reason: format!("row {i}: key {:?} is not numeric", r[col]),
            })?;
            if x < prev {
                return Err(Error::Schema {
                    file: name.to_string(),
                    reason: format!("row {i}: key column {} decreases", self.header[col]),
                });
            }
            prev = x;
        }
        Ok(())
    }

    pub fn write_to<W: std::io::Write>(&self, out: W) -> Result<()> {
        self.check("<stream>")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        self.check(&path.display().to_string())?;
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }
}

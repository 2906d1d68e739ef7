//! CSV time series with a fixed header.
//!
//! Floats are written with Rust's shortest round-trip formatting (`{:?}`). Opening an
//! existing file for append checks its header against the schema.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum SeriesError {
    #[error("{path}: header {found:?} does not match schema {expected:?}")]
    HeaderMismatch {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}: row has {got} fields, schema has {expected}")]
    RowLength {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    /// truncate and write the header
    Create,
    /// keep existing rows; write the header only if the file is new or empty
    Append,
}

pub struct SeriesWriter {
    path: PathBuf,
    schema: Vec<String>,
    inner: csv::Writer<File>,
    rows: usize,
}

impl std::fmt::Debug for SeriesWriter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeriesWriter")
            .field("path", &self.path)
            .field("schema", &self.schema)
            .field("rows", &self.rows)
            .finish()
    }
}

impl SeriesWriter {
    pub fn open<S: AsRef<str>>(
        path: &Path,
        schema: &[S],
        mode: OpenMode,
    ) -> Result<Self, SeriesError> {
        let schema: Vec<String> = schema.iter().map(|s| s.as_ref().to_string()).collect();
        let io = |source| SeriesError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut need_header = true;
        if mode == OpenMode::Append && path.exists() {
            let mut first = String::new();
            BufReader::new(File::open(path).map_err(io)?)
                .read_line(&mut first)
                .map_err(io)?;
            let first = first.trim_end_matches(['\n', '\r']);
            if !first.is_empty() {
                let found: Vec<String> = first.split(',').map(str::to_string).collect();
                if found != schema {
                    return Err(SeriesError::HeaderMismatch {
                        path: path.to_path_buf(),
                        expected: schema,
                        found,
                    });
                }
                need_header = false;
            }
        }
        let file = match mode {
            OpenMode::Create => File::create(path),
            OpenMode::Append => OpenOptions::new().create(true).append(true).open(path),
        }
        .map_err(io)?;
        let mut w = SeriesWriter {
            path: path.to_path_buf(),
            inner: csv::WriterBuilder::new()
                .has_headers(false)
                .from_writer(file),
            schema,
            rows: 0,
        };
        if need_header {
            let header = w.schema.clone();
            w.write_raw(&header)?;
            w.flush()?;
        }
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    /// Rows written through this writer (not counting earlier appends).
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn write_row<S: AsRef<str>>(&mut self, row: &[S]) -> Result<(), SeriesError> {
        if row.len() != self.schema.len() {
            return Err(SeriesError::RowLength {
                path: self.path.clone(),
                expected: self.schema.len(),
                got: row.len(),
            });
        }
        self.write_raw(row)?;
        self.rows += 1;
        Ok(())
    }

    pub fn write_values(&mut self, row: &[f64]) -> Result<(), SeriesError> {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        self.write_row(&fields)
    }

    fn write_raw<S: AsRef<str>>(&mut self, row: &[S]) -> Result<(), SeriesError> {
        self.inner
            .write_record(row.iter().map(|s| s.as_ref()))
            .map_err(|source| SeriesError::Csv {
                path: self.path.clone(),
                source,
            })
    }

    pub fn flush(&mut self) -> Result<(), SeriesError> {
        self.inner.flush().map_err(|source| SeriesError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

impl Drop for SeriesWriter {
    fn drop(&mut self) {
        let _ = self.inner.flush();
    }
}

/// Reads a series back as header plus rows of strings.
pub fn read_series(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), SeriesError> {
    let csv_err = |source| SeriesError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_run_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        drop(SeriesWriter::open(&p, &["t", "x"], OpenMode::Create).unwrap());
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,x\n");
    }

    #[test]
    fn append_continues_without_a_second_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut w = SeriesWriter::open(&p, &["t", "x"], OpenMode::Create).unwrap();
        w.write_values(&[0.1, 1.0 / 3.0]).unwrap();
        drop(w);
        let mut w = SeriesWriter::open(&p, &["t", "x"], OpenMode::Append).unwrap();
        w.write_values(&[0.2, 1e-300]).unwrap();
        drop(w);
        let (h, rows) = read_series(&p).unwrap();
        assert_eq!(h, vec!["t", "x"]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(rows[1][1], "1e-300");
    }

    #[test]
    fn schema_drift_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let mut w = SeriesWriter::open(&p, &["t", "x"], OpenMode::Create).unwrap();
        assert!(matches!(
            w.write_values(&[1.0]),
            Err(SeriesError::RowLength { .. })
        ));
        drop(w);
        assert!(matches!(
            SeriesWriter::open(&p, &["t", "y"], OpenMode::Append),
            Err(SeriesError::HeaderMismatch { .. })
        ));
    }
}

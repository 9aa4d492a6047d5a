//! A minimal column store for survey microdata.
//!
//! Numeric columns hold `Option<f64>` so blanks survive the round trip from
//! CSV; columns containing any non-numeric token are kept as text.

use std::collections::BTreeMap;
use std::io::Read;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("column `{name}` has {got} rows, frame has {expected}")]
    Length {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    nrows: usize,
    numeric: BTreeMap<String, Vec<Option<f64>>>,
    text: BTreeMap<String, Vec<String>>,
}

impl Frame {
    pub fn new(nrows: usize) -> Self {
        Self {
            nrows,
            ..Self::default()
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn insert(&mut self, name: &str, values: Vec<Option<f64>>) -> Result<(), FrameError> {
        if values.len() != self.nrows {
            return Err(FrameError::Length {
                name: name.to_string(),
                expected: self.nrows,
                got: values.len(),
            });
        }
        self.text.remove(name);
        self.numeric.insert(name.to_string(), values);
        Ok(())
    }

    pub fn insert_dense(&mut self, name: &str, values: Vec<f64>) -> Result<(), FrameError> {
        self.insert(name, values.into_iter().map(Some).collect())
    }

    pub fn insert_text(&mut self, name: &str, values: Vec<String>) -> Result<(), FrameError> {
        if values.len() != self.nrows {
            return Err(FrameError::Length {
                name: name.to_string(),
                expected: self.nrows,
                got: values.len(),
            });
        }
        self.numeric.remove(name);
        self.text.insert(name.to_string(), values);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>], FrameError> {
        self.numeric
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| FrameError::UnknownColumn(name.to_string()))
    }

    pub fn text(&self, name: &str) -> Result<&[String], FrameError> {
        self.text
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| FrameError::UnknownColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.numeric.contains_key(name) || self.text.contains_key(name)
    }

    pub fn value(&self, name: &str, row: usize) -> Option<f64> {
        self.numeric.get(name).and_then(|c| c[row])
    }

    pub fn numeric_names(&self) -> impl Iterator<Item = &str> {
        self.numeric.keys().map(String::as_str)
    }

    /// Rows where `mask` is true, in order.
    pub fn filter(&self, mask: &[bool]) -> Frame {
        assert_eq!(mask.len(), self.nrows, "mask length must match frame");
        let nrows = mask.iter().filter(|&&m| m).count();
        let numeric = self
            .numeric
            .iter()
            .map(|(k, v)| {
                let kept = v
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(x, _)| *x)
                    .collect();
                (k.clone(), kept)
            })
            .collect();
        let text = self
            .text
            .iter()
            .map(|(k, v)| {
                let kept = v
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(x, _)| x.clone())
                    .collect();
                (k.clone(), kept)
            })
            .collect();
        Frame {
            nrows,
            numeric,
            text,
        }
    }

    /// Reads a headed CSV. Blank cells become `None`; a column with any
    /// non-numeric, non-blank cell is stored as text.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Frame, FrameError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (j, cell) in rec.iter().enumerate().take(headers.len()) {
                raw[j].push(cell.to_string());
            }
        }
        let nrows = raw.first().map_or(0, Vec::len);
        let mut frame = Frame::new(nrows);
        for (name, cells) in headers.iter().zip(raw) {
            let parsed: Option<Vec<Option<f64>>> = cells
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        Some(None)
                    } else {
                        c.parse::<f64>().ok().map(Some)
                    }
                })
                .collect();
            match parsed {
                Some(values) => frame.insert(name, values)?,
                None => frame.insert_text(name, cells)?,
            }
        }
        Ok(frame)
    }
}

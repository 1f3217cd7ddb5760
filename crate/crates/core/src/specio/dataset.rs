use std::path::Path;

use crate::error::{ensure_dims, Error, Result};
use crate::linalg::Vector;

/// Labelled inputs. Every row has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vector>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, labels: Vec<usize>) -> Result<Self> {
        ensure_dims("dataset labels", inputs.len(), labels.len())?;
        if let Some(first) = inputs.first() {
            for x in &inputs {
                ensure_dims("dataset row", first.len(), x.len())?;
            }
        }
        Ok(Dataset { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Row length, zero for an empty set.
    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector, usize)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Fails if any label falls outside `0..n`.
    pub fn check_labels(&self, n: usize) -> Result<()> {
        match self.labels.iter().position(|&y| y >= n) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "row {i} has label {} but the model has {n} outputs",
                self.labels[i]
            ))),
            None => Ok(()),
        }
    }

    /// Reads a headerless CSV whose last column is an integer label.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, 0, e))?;
        let mut inputs = vec![];
        let mut labels = vec![];
        for (i, rec) in reader.records().enumerate() {
            let line = i + 1;
            let rec = rec.map_err(|e| csv_error(path, line, e))?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if rec.len() < 2 {
                return Err(parse_err("expected at least one feature and a label".into()));
            }
            let (feats, label) = (rec.iter().take(rec.len() - 1), &rec[rec.len() - 1]);
            let x = feats
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_err(format!("bad feature value '{t}'")))
                })
                .collect::<Result<Vec<f64>>>()?;
            let y = label
                .parse::<usize>()
                .map_err(|_| parse_err(format!("bad label '{label}'")))?;
            if let Some(first) = inputs.first() {
                let first: &Vector = first;
                if first.len() != x.len() {
                    return Err(parse_err(format!("expected {} features, found {}", first.len(), x.len())));
                }
            }
            inputs.push(Vector::from(x));
            labels.push(y);
        }
        Dataset::new(inputs, labels)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| csv_error(path, 0, e))?;
        for (x, y) in self.iter() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            row.push(y.to_string());
            w.write_record(&row).map_err(|e| csv_error(path, 0, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, line: usize, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return Error::io(path, io),
            _ => unreachable!(),
        }
    }
    let line = e.position().map_or(line, |p| p.line() as usize);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

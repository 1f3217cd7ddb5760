//! Reader and writer for the NNet text format.
//!
//! Layout after any `//` comment lines:
//!
//! ```text
//! numLayers, inputSize, outputSize, maxLayerSize,
//! size_0, size_1, ..., size_numLayers,
//! 0,                      (unused legacy flag)
//! input minimums,
//! input maximums,
//! means (inputs, then output),
//! ranges (inputs, then output),
//! per layer: one line per weight row, then one line per bias
//! ```
//!
//! Hidden layers use ReLU, the output layer is linear. The network is kept
//! in normalized coordinates; [`Normalization`] maps physical inputs in and
//! raw outputs back out.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::linalg::{Hyperbox, Matrix};
use crate::network::{ActivationKind, Layer, Network};
use crate::repair::{LinearConstraint, Property};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_range: Vec<f64>,
    pub output_mean: f64,
    pub output_range: f64,
}

impl Normalization {
    pub fn input_dim(&self) -> usize {
        self.input_min.len()
    }

    /// Clamps to the input limits, then applies `(x - mean) / range`.
    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v.clamp(self.input_min[i], self.input_max[i]) - self.input_mean[i]) / self.input_range[i])
            .collect()
    }

    pub fn denormalize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.output_range + self.output_mean).collect()
    }

    pub fn normalize_box(&self, bx: &Hyperbox) -> Result<Hyperbox> {
        ensure_dims("property input", self.input_dim(), bx.dim())?;
        Hyperbox::new(self.normalize_input(bx.lower()), self.normalize_input(bx.upper()))
    }

    /// Rewrites `cᵀ y + d` over de-normalized outputs as a constraint on the
    /// raw network outputs.
    pub fn normalize_constraint(&self, c: &LinearConstraint) -> LinearConstraint {
        let sum: f64 = c.coeffs.iter().sum();
        LinearConstraint::new(
            c.coeffs.iter().map(|v| v * self.output_range).collect::<Vec<_>>(),
            c.bias + self.output_mean * sum,
        )
    }

    /// A property authored in physical units, expressed on the raw network.
    pub fn normalize_property(&self, p: &Property) -> Result<Property> {
        let input = self.normalize_box(p.input())?;
        let constraints = p.constraints().iter().map(|c| self.normalize_constraint(c)).collect();
        Property::new(input, constraints, p.label())
    }

    fn validate(&self, path: &Path, line: usize) -> Result<()> {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for i in 0..self.input_dim() {
            if !(self.input_min[i] <= self.input_max[i]) {
                return Err(bad(format!("input {i} has minimum above maximum")));
            }
            if !(self.input_range[i] > 0.0) {
                return Err(bad(format!("input {i} has non-positive range")));
            }
        }
        if !(self.output_range > 0.0) {
            return Err(bad("output range must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnetModel {
    pub network: Network,
    pub normalization: Normalization,
}

impl NnetModel {
    /// Reference semantics: normalize, run, de-normalize.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dims("nnet input", self.normalization.input_dim(), x.len())?;
        let y = self.network.forward(&self.normalization.normalize_input(x))?;
        Ok(self.normalization.denormalize_output(&y))
    }
}

struct Lines<'a> {
    path: PathBuf,
    iter: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &Path, text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with("//")),
        );
        Lines {
            path: path.to_path_buf(),
            iter: it.peekable(),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    /// Next data line as numbers, or an error naming the missing section.
    fn numbers(&mut self, section: &str) -> Result<(usize, Vec<f64>)> {
        let Some((line, text)) = self.iter.next() else {
            return Err(Error::Parse {
                path: self.path.clone(),
                line: 0,
                message: format!("unexpected end of file: missing {section}"),
            });
        };
        let vals = text
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(line, format!("non-numeric token '{t}' in {section}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((line, vals))
    }

    fn exactly(&mut self, section: &str, n: usize) -> Result<(usize, Vec<f64>)> {
        let (line, vals) = self.numbers(section)?;
        if vals.len() < n {
            return Err(self.err(line, format!("{section}: expected {n} values, found {}", vals.len())));
        }
        if vals.len() > n {
            return Err(self.err(line, format!("{section}: expected {n} values, found {}", vals.len())));
        }
        Ok((line, vals))
    }
}

fn as_count(lines: &Lines, line: usize, v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
        Ok(v as usize)
    } else {
        Err(lines.err(line, format!("{what} must be a positive integer, found {v}")))
    }
}

pub fn parse_nnet_str(text: &str, path: &Path) -> Result<NnetModel> {
    let mut lines = Lines::new(path, text);
    let (hline, header) = lines.numbers("header")?;
    if header.len() < 4 {
        return Err(lines.err(hline, "header: expected layer count, input size, output size, max layer size"));
    }
    let num_layers = as_count(&lines, hline, header[0], "layer count")?;
    let input_size = as_count(&lines, hline, header[1], "input size")?;
    let output_size = as_count(&lines, hline, header[2], "output size")?;
    let (sline, sizes) = lines.exactly("layer sizes", num_layers + 1)?;
    let sizes = sizes
        .iter()
        .map(|&v| as_count(&lines, sline, v, "layer size"))
        .collect::<Result<Vec<usize>>>()?;
    if sizes[0] != input_size || sizes[num_layers] != output_size {
        return Err(lines.err(sline, "layer sizes disagree with the header input/output sizes"));
    }
    lines.numbers("legacy flag")?;
    let (_, input_min) = lines.exactly("input minimums", input_size)?;
    let (_, input_max) = lines.exactly("input maximums", input_size)?;
    let (_, mut means) = lines.exactly("means", input_size + 1)?;
    let (nline, mut ranges) = lines.exactly("ranges", input_size + 1)?;
    let normalization = Normalization {
        input_min,
        input_max,
        output_mean: means.pop().unwrap(),
        output_range: ranges.pop().unwrap(),
        input_mean: means,
        input_range: ranges,
    };
    normalization.validate(path, nline)?;

    let mut layers = Vec::with_capacity(num_layers);
    for k in 0..num_layers {
        let (rows, cols) = (sizes[k + 1], sizes[k]);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let (_, row) = lines.exactly(&format!("layer {k} weight row {r}"), cols)?;
            data.extend(row);
        }
        let mut bias = Vec::with_capacity(rows);
        for r in 0..rows {
            let (_, b) = lines.exactly(&format!("layer {k} bias {r}"), 1)?;
            bias.push(b[0]);
        }
        let act = if k + 1 == num_layers {
            ActivationKind::Identity
        } else {
            ActivationKind::Relu
        };
        layers.push(Layer::new(Matrix::new(rows, cols, data)?, bias, act)?);
    }
    if let Some((line, _)) = lines.iter.next() {
        return Err(lines.err(line, "trailing data after the last layer"));
    }
    Ok(NnetModel {
        network: Network::new(layers)?,
        normalization,
    })
}

pub fn parse_nnet(path: impl AsRef<Path>) -> Result<NnetModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nnet_str(&text, path)
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for v in vals {
        write!(s, "{v},").unwrap();
    }
    s
}

/// Serializes in NNet layout. Every hidden layer must be ReLU.
pub fn nnet_to_string(model: &NnetModel) -> Result<String> {
    let net = &model.network;
    let norm = &model.normalization;
    ensure_dims("normalization", net.input_dim(), norm.input_dim())?;
    let n = net.num_layers();
    for l in &net.layers()[..n - 1] {
        if l.activation != ActivationKind::Relu {
            return Err(Error::InvalidArgument(format!(
                "NNet supports ReLU hidden layers only, found {:?}",
                l.activation
            )));
        }
    }
    let mut sizes = vec![net.input_dim()];
    sizes.extend(net.layers().iter().map(Layer::out_dim));
    let mut out = String::from("// Neural network in NNet format\n");
    writeln!(out, "{},{},{},{},", n, net.input_dim(), net.output_dim(), sizes.iter().max().unwrap()).unwrap();
    writeln!(out, "{}", sizes.iter().map(|s| format!("{s},")).collect::<String>()).unwrap();
    out.push_str("0,\n");
    writeln!(out, "{}", join(norm.input_min.iter().copied())).unwrap();
    writeln!(out, "{}", join(norm.input_max.iter().copied())).unwrap();
    writeln!(out, "{}", join(norm.input_mean.iter().copied().chain([norm.output_mean]))).unwrap();
    writeln!(out, "{}", join(norm.input_range.iter().copied().chain([norm.output_range]))).unwrap();
    for l in net.layers() {
        for r in 0..l.out_dim() {
            writeln!(out, "{}", join(l.weights.row(r).iter().copied())).unwrap();
        }
        for b in l.bias.iter() {
            writeln!(out, "{b},").unwrap();
        }
    }
    Ok(out)
}

pub fn write_nnet(model: &NnetModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, nnet_to_string(model)?).map_err(|e| Error::io(path, e))
}

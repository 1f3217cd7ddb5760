//! Dense vectors, row-major matrices, axis-aligned boxes, and the closed-form
//! linear optimizations over boxes that the bound and repair code relies on.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    /// Builds a vector, rejecting NaN and infinite entries.
    pub fn try_from_vec(data: Vec<f64>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entry {} at index {i}",
                data[i]
            )));
        }
        Ok(Vector(data))
    }

    pub fn basis(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[i] = 1.0;
        v
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        ensure_dims("matrix data", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            ensure_dims("matrix row", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `W x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// `yᵀ W`, i.e. `Wᵀ y`.
    pub fn vec_mul(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += yr * w;
            }
        }
        out
    }
}

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`. A degenerate box
/// (`lower == upper`) denotes a single point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    lower: Vector,
    upper: Vector,
}

impl Hyperbox {
    pub fn new(lower: impl Into<Vector>, upper: impl Into<Vector>) -> Result<Self> {
        let (lower, upper) = (lower.into(), upper.into());
        ensure_dims("box bounds", lower.len(), upper.len())?;
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidArgument("box bounds must be finite".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::InvalidArgument(format!(
                "box lower bound {} exceeds upper bound {} in dimension {i}",
                lower[i], upper[i]
            )));
        }
        Ok(Hyperbox { lower, upper })
    }

    pub fn point(x: impl Into<Vector>) -> Self {
        let x = x.into();
        Hyperbox {
            lower: x.clone(),
            upper: x,
        }
    }

    /// ℓ∞ ball of radius `r` around `center`.
    pub fn around(center: &[f64], r: f64) -> Self {
        Hyperbox {
            lower: center.iter().map(|c| c - r).collect(),
            upper: center.iter().map(|c| c + r).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &Vector {
        &self.lower
    }

    pub fn upper(&self) -> &Vector {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn widths(&self) -> Vector {
        (0..self.dim()).map(|i| self.width(i)).collect()
    }

    pub fn midpoint(&self) -> Vector {
        (0..self.dim())
            .map(|i| 0.5 * (self.lower[i] + self.upper[i]))
            .collect()
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] >= self.lower[i] - tol && x[i] <= self.upper[i] + tol)
    }

    /// Splits along `dim` at the midpoint. Both halves share the midplane.
    pub fn bisect(&self, dim: usize) -> Result<(Hyperbox, Hyperbox)> {
        if dim >= self.dim() {
            return Err(Error::InvalidArgument(format!(
                "split dimension {dim} out of range for {}-dimensional box",
                self.dim()
            )));
        }
        if self.width(dim) <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cannot bisect zero-width dimension {dim}"
            )));
        }
        let mid = 0.5 * (self.lower[dim] + self.upper[dim]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[dim] = mid;
        right.lower[dim] = mid;
        Ok((left, right))
    }
}

/// `min_{x ∈ box} a·x + b`, attained coordinate-wise at a corner.
pub fn affine_min_over_box(a: &[f64], b: f64, bx: &Hyperbox) -> Result<f64> {
    ensure_dims("affine_min_over_box", bx.dim(), a.len())?;
    Ok(affine_min_unchecked(a, b, bx))
}

pub(crate) fn affine_min_unchecked(a: &[f64], b: f64, bx: &Hyperbox) -> f64 {
    a.iter()
        .zip(bx.lower.iter().zip(bx.upper.iter()))
        .map(|(&ai, (&l, &u))| {
            if ai >= 0.0 {
                ai * l
            } else {
                ai * u
            }
        })
        .sum::<f64>()
        + b
}

/// A maximizer of `a·x` over the box. Coordinates with `a_i == 0` take the
/// box midpoint.
pub fn affine_argmax_over_box(a: &[f64], bx: &Hyperbox) -> Result<Vector> {
    ensure_dims("affine_argmax_over_box", bx.dim(), a.len())?;
    Ok(a.iter()
        .enumerate()
        .map(|(i, &ai)| {
            if ai > 0.0 {
                bx.upper[i]
            } else if ai < 0.0 {
                bx.lower[i]
            } else {
                0.5 * (bx.lower[i] + bx.upper[i])
            }
        })
        .collect())
}

/// Coordinate-wise clamp; the nearest box point under every ℓp norm.
pub fn project_onto_box(x: &[f64], bx: &Hyperbox) -> Result<Vector> {
    ensure_dims("project_onto_box", bx.dim(), x.len())?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, &v)| v.clamp(bx.lower[i], bx.upper[i]))
        .collect())
}

/// ℓp norm for `p ≥ 1`; pass `f64::INFINITY` for the max norm.
pub fn lp_norm(x: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("norm order {p} must be ≥ 1")));
    }
    Ok(if p.is_infinite() {
        x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        // scale by the max entry so large p does not overflow
        let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            0.0
        } else {
            m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
        }
    })
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

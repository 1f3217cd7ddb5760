use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::linalg::{Hyperbox, Vector};
use crate::network::Network;

/// A single output constraint `cᵀ f(x) + d ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vector,
    pub bias: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: impl Into<Vector>, bias: f64) -> Self {
        LinearConstraint {
            coeffs: coeffs.into(),
            bias,
        }
    }

    /// `e_a − e_b`: output `a` must be at least output `b`.
    pub fn at_least(n: usize, a: usize, b: usize) -> Self {
        let mut c = Vector::zeros(n);
        c[a] += 1.0;
        c[b] -= 1.0;
        LinearConstraint::new(c, 0.0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.dot(y) + self.bias
    }
}

/// An input box together with the output constraints every point of it must
/// satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Property {
    input: Hyperbox,
    constraints: Vec<LinearConstraint>,
    label: String,
}

impl Property {
    pub fn new(
        input: Hyperbox,
        constraints: Vec<LinearConstraint>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let label = label.into();
        let Some(first) = constraints.first() else {
            return Err(Error::InvalidProperty(format!(
                "property '{label}' has no constraints"
            )));
        };
        let n = first.coeffs.len();
        for c in &constraints {
            ensure_dims("constraint coefficients", n, c.coeffs.len())?;
            if !c.coeffs.is_finite() || !c.bias.is_finite() {
                return Err(Error::InvalidProperty(format!(
                    "property '{label}' has a non-finite constraint"
                )));
            }
        }
        Ok(Property {
            input,
            constraints,
            label,
        })
    }

    /// Point property asking that `y` be the (possibly tied) argmax at `x`,
    /// encoded as the `n` constraints `f_y − f_j ≥ 0`.
    pub fn classification(x: &[f64], y: usize, n: usize) -> Self {
        let constraints = (0..n).map(|j| LinearConstraint::at_least(n, y, j)).collect();
        Property {
            input: Hyperbox::point(x.to_vec()),
            constraints,
            label: format!("class-{y}"),
        }
    }

    /// `ℓ∞`-style robustness region: dimensions in `dims` perturbed by
    /// `± radius` around `x`, all others fixed.
    pub fn local_robustness(x: &[f64], dims: &[usize], radius: f64, y: usize, n: usize) -> Result<Self> {
        let mut lo = x.to_vec();
        let mut hi = x.to_vec();
        for &d in dims {
            if d >= x.len() {
                return Err(Error::dims("perturbed dimension", x.len(), d));
            }
            lo[d] -= radius;
            hi[d] += radius;
        }
        let constraints = (0..n).map(|j| LinearConstraint::at_least(n, y, j)).collect();
        Property::new(
            Hyperbox::new(lo, hi)?,
            constraints,
            format!("robust-{y}-{}d", dims.len()),
        )
    }

    pub fn input(&self) -> &Hyperbox {
        &self.input
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn output_dim(&self) -> usize {
        self.constraints[0].coeffs.len()
    }

    pub fn is_point(&self) -> bool {
        self.input.is_point()
    }

    /// Same constraints over a different input box.
    pub fn with_input(&self, input: Hyperbox, label: impl Into<String>) -> Self {
        Property {
            input,
            constraints: self.constraints.clone(),
            label: label.into(),
        }
    }

    pub fn holds_on_output(&self, y: &[f64]) -> bool {
        self.constraints.iter().all(|c| c.eval(y) >= 0.0)
    }

    pub fn margins(&self, y: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.eval(y)).collect()
    }

    pub fn check_against(&self, net: &Network) -> Result<()> {
        ensure_dims("property input", net.input_dim(), self.input.dim())?;
        ensure_dims("property constraints", net.output_dim(), self.output_dim())
    }
}

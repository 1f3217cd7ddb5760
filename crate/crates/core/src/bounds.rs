//! Linear-relaxation bound propagation.
//!
//! Each activation is sandwiched between two lines valid on its
//! pre-activation interval. A linear objective over the network output is
//! then back-substituted layer by layer, picking the lower line where its
//! coefficient is non-negative and the upper line otherwise, until it is an
//! affine function of the input. Minimizing that function over the input box
//! gives a sound lower bound on the objective.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::exec::Exec;
use crate::linalg::{affine_min_unchecked, dot, Hyperbox, Vector};
use crate::network::{ActivationKind, Layer};
use crate::repair::LinearConstraint;

/// Two lines enclosing an activation on a pre-activation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationRelaxation {
    pub lower_slope: f64,
    pub lower_intercept: f64,
    pub upper_slope: f64,
    pub upper_intercept: f64,
}

impl ActivationRelaxation {
    fn exact_line(slope: f64, intercept: f64) -> Self {
        ActivationRelaxation {
            lower_slope: slope,
            lower_intercept: intercept,
            upper_slope: slope,
            upper_intercept: intercept,
        }
    }

    pub fn lower_at(&self, z: f64) -> f64 {
        self.lower_slope * z + self.lower_intercept
    }

    pub fn upper_at(&self, z: f64) -> f64 {
        self.upper_slope * z + self.upper_intercept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMode {
    /// Interval arithmetic, layer by layer.
    Ibp,
    /// Back-substitution for every intermediate neuron, intersected with IBP.
    #[default]
    Backward,
}

impl std::str::FromStr for BoundsMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ibp" => Ok(BoundsMode::Ibp),
            "backward" | "crown" => Ok(BoundsMode::Backward),
            other => Err(Error::InvalidArgument(format!("unknown bounds mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub mode: BoundsMode,
    pub exec: Exec,
}

/// Affine function `coeffs · x + bias` of the subnetwork input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineBound {
    pub coeffs: Vector,
    pub bias: f64,
}

impl AffineBound {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.dot(x) + self.bias
    }

    pub fn min_over(&self, bx: &Hyperbox) -> f64 {
        affine_min_unchecked(&self.coeffs, self.bias, bx)
    }
}

/// Per-constraint affine lower bounds and their minima over the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bounds: Vec<AffineBound>,
    pub lb: Vec<f64>,
}

impl BoundReport {
    /// Indices of constraints whose lower bound is negative.
    pub fn violated(&self) -> Vec<usize> {
        (0..self.lb.len()).filter(|&i| self.lb[i] < 0.0).collect()
    }

    pub fn is_verified(&self) -> bool {
        self.lb.iter().all(|&v| v >= 0.0)
    }

    pub fn min_lb(&self) -> f64 {
        self.lb.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Pre-activation intervals, one entry per layer of the subnetwork.
#[derive(Debug, Clone, PartialEq)]
pub struct PreActivationBounds {
    pub lower: Vec<Vector>,
    pub upper: Vec<Vector>,
}

pub fn relax_activation(kind: ActivationKind, l: f64, u: f64) -> Result<ActivationRelaxation> {
    if !(l <= u) {
        return Err(Error::InvalidArgument(format!(
            "relaxation interval [{l}, {u}] is empty"
        )));
    }
    Ok(relax_unchecked(kind, l, u))
}

fn relax_unchecked(kind: ActivationKind, l: f64, u: f64) -> ActivationRelaxation {
    match kind {
        ActivationKind::Identity => ActivationRelaxation::exact_line(1.0, 0.0),
        ActivationKind::Relu => relax_leaky(0.0, l, u),
        ActivationKind::LeakyRelu(a) => relax_leaky(a, l, u),
        ActivationKind::Tanh => relax_tanh(l, u),
    }
}

/// ReLU is the `leak = 0` case.
fn relax_leaky(leak: f64, l: f64, u: f64) -> ActivationRelaxation {
    if u <= 0.0 {
        return ActivationRelaxation::exact_line(leak, 0.0);
    }
    if l >= 0.0 {
        return ActivationRelaxation::exact_line(1.0, 0.0);
    }
    let upper_slope = (u - leak * l) / (u - l);
    let upper_intercept = leak * l - upper_slope * l;
    // area-minimizing choice among lower lines through the origin
    let lower_slope = if u >= -l { 1.0 } else { leak };
    ActivationRelaxation {
        lower_slope,
        lower_intercept: 0.0,
        upper_slope,
        upper_intercept,
    }
}

fn tanh_prime(z: f64) -> f64 {
    let t = z.tanh();
    1.0 - t * t
}

fn tangent(z: f64) -> (f64, f64) {
    let s = tanh_prime(z);
    (s, z.tanh() - s * z)
}

fn chord(l: f64, u: f64) -> (f64, f64) {
    let s = (u.tanh() - l.tanh()) / (u - l);
    (s, l.tanh() - s * l)
}

/// Upper line for tanh on `[l, u]`.
fn tanh_upper(l: f64, u: f64) -> (f64, f64) {
    if u - l < 1e-12 {
        let (s, c) = tangent(0.5 * (l + u));
        // absorb the curvature over the tiny interval
        return (s, c + (u - l).max(0.0));
    }
    if u <= 0.0 {
        return chord(l, u);
    }
    if l >= 0.0 {
        return tangent(0.5 * (l + u));
    }
    // Tangent at d > 0 that passes through (l, tanh l). The residual g is
    // increasing in d on (0, ∞).
    let g = |d: f64| d.tanh() + tanh_prime(d) * (l - d) - l.tanh();
    if g(u) <= 0.0 {
        return chord(l, u);
    }
    let (mut lo, mut hi) = (0.0, u);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    // `hi` keeps g ≥ 0, so the line sits on or above (l, tanh l)
    tangent(hi)
}

fn relax_tanh(l: f64, u: f64) -> ActivationRelaxation {
    let (upper_slope, upper_intercept) = tanh_upper(l, u);
    // tanh is odd: a lower line on [l, u] mirrors an upper line on [-u, -l]
    let (s, c) = tanh_upper(-u, -l);
    ActivationRelaxation {
        lower_slope: s,
        lower_intercept: -c,
        upper_slope,
        upper_intercept,
    }
}

type LayerRelaxation = Option<Vec<ActivationRelaxation>>;

fn relax_layer(kind: ActivationKind, lower: &[f64], upper: &[f64]) -> LayerRelaxation {
    if kind.is_identity() {
        return None;
    }
    Some(
        lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| relax_unchecked(kind, l, u))
            .collect(),
    )
}

/// Rewrites `λ · σ(z) + bias` as a lower bound `λ' · z + bias'`.
fn through_activation(relax: &[ActivationRelaxation], lambda: &mut [f64], bias: &mut f64) {
    for (lam, r) in lambda.iter_mut().zip(relax) {
        if *lam >= 0.0 {
            *bias += *lam * r.lower_intercept;
            *lam *= r.lower_slope;
        } else {
            *bias += *lam * r.upper_intercept;
            *lam *= r.upper_slope;
        }
    }
}

/// Given `λ · z_j + bias` on the pre-activation of `layers[j]`, returns an
/// affine lower bound in terms of the subnetwork input.
fn backsubstitute(
    layers: &[Layer],
    relax: &[LayerRelaxation],
    j: usize,
    lambda: &[f64],
    mut bias: f64,
) -> AffineBound {
    let mut lam = lambda.to_vec();
    for i in (0..=j).rev() {
        let layer = &layers[i];
        bias += dot(&lam, &layer.bias);
        lam = layer.weights.vec_mul(&lam);
        if i > 0 {
            if let Some(r) = &relax[i - 1] {
                through_activation(r, &mut lam, &mut bias);
            }
        }
    }
    AffineBound {
        coeffs: lam.into(),
        bias,
    }
}

fn interval_affine(layer: &Layer, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut l = layer.bias.to_vec();
    let mut u = layer.bias.to_vec();
    for r in 0..layer.out_dim() {
        for (c, &w) in layer.weights.row(r).iter().enumerate() {
            if w >= 0.0 {
                l[r] += w * lo[c];
                u[r] += w * hi[c];
            } else {
                l[r] += w * hi[c];
                u[r] += w * lo[c];
            }
        }
    }
    (l, u)
}

fn post_activation(kind: ActivationKind, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    // every supported activation is monotone non-decreasing
    (
        lo.iter().map(|&v| kind.apply(v)).collect(),
        hi.iter().map(|&v| kind.apply(v)).collect(),
    )
}

fn check_subnet(layers: &[Layer], bx: &Hyperbox) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("empty subnetwork".into()));
    }
    ensure_dims("bounding box", layers[0].in_dim(), bx.dim())
}

struct Propagation {
    pre: PreActivationBounds,
    relax: Vec<LayerRelaxation>,
}

fn propagate(layers: &[Layer], bx: &Hyperbox, opts: BoundOptions, all_layers: bool) -> Propagation {
    let mut pre = PreActivationBounds {
        lower: Vec::with_capacity(layers.len()),
        upper: Vec::with_capacity(layers.len()),
    };
    let mut relax: Vec<LayerRelaxation> = Vec::with_capacity(layers.len());
    let (mut post_lo, mut post_hi) = (bx.lower().to_vec(), bx.upper().to_vec());
    for (j, layer) in layers.iter().enumerate() {
        let (ibp_lo, ibp_hi) = interval_affine(layer, &post_lo, &post_hi);
        let needed = all_layers || !layer.activation.is_identity();
        let (lo, hi) = if j == 0 || opts.mode == BoundsMode::Ibp || !needed {
            (ibp_lo, ibp_hi)
        } else {
            let bound = |mut lam: Vec<f64>, mut bias: f64| {
                // the row acts on the previous layer's activation output
                if let Some(r) = &relax[j - 1] {
                    through_activation(r, &mut lam, &mut bias);
                }
                backsubstitute(layers, &relax, j - 1, &lam, bias).min_over(bx)
            };
            let rows = opts.exec.map_range(layer.out_dim(), |n| {
                let w = layer.weights.row(n);
                let b = layer.bias[n];
                let lower = bound(w.to_vec(), b);
                let upper = -bound(w.iter().map(|v| -v).collect(), -b);
                (lower, upper)
            });
            rows.into_iter()
                .zip(ibp_lo.iter().zip(&ibp_hi))
                .map(|((bl, bu), (&il, &iu))| {
                    let (l, u) = (bl.max(il), bu.min(iu));
                    if l <= u {
                        (l, u)
                    } else {
                        (u, l)
                    }
                })
                .unzip()
        };
        relax.push(relax_layer(layer.activation, &lo, &hi));
        let (pl, ph) = post_activation(layer.activation, &lo, &hi);
        post_lo = pl;
        post_hi = ph;
        pre.lower.push(lo.into());
        pre.upper.push(hi.into());
    }
    Propagation { pre, relax }
}

/// Sound pre-activation intervals for every layer of `layers` over `bx`.
pub fn intermediate_bounds(
    layers: &[Layer],
    bx: &Hyperbox,
    opts: BoundOptions,
) -> Result<PreActivationBounds> {
    check_subnet(layers, bx)?;
    Ok(propagate(layers, bx, opts, true).pre)
}

/// Affine lower bounds on `cᵀ f(x) + d` over `bx` for each constraint, and
/// their concrete minima.
pub fn linear_lower_bounds(
    layers: &[Layer],
    bx: &Hyperbox,
    constraints: &[LinearConstraint],
    opts: BoundOptions,
) -> Result<BoundReport> {
    check_subnet(layers, bx)?;
    let out_dim = layers.last().unwrap().out_dim();
    for c in constraints {
        ensure_dims("constraint coefficients", out_dim, c.coeffs.len())?;
    }
    let prop = propagate(layers, bx, opts, false);
    let last = layers.len() - 1;
    let bounds = opts.exec.map(constraints, |c| {
        let mut lam = c.coeffs.to_vec();
        let mut bias = c.bias;
        if let Some(r) = &prop.relax[last] {
            through_activation(r, &mut lam, &mut bias);
        }
        backsubstitute(layers, &prop.relax, last, &lam, bias)
    });
    let lb = bounds.iter().map(|b| b.min_over(bx)).collect();
    Ok(BoundReport { bounds, lb })
}

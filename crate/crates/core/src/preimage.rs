//! Proxy-box synthesis: find a small feature-space box that bound
//! propagation certifies to lie inside the head's preimage of the valid
//! output set.
//!
//! Starting from the original feature, each step bounds the head over the
//! current box and, if some constraint is not certified, moves the center to
//! the box corner that maximizes the summed lower-bound coefficients of the
//! uncertified constraints.

use serde::Serialize;

use crate::bounds::{linear_lower_bounds, BoundOptions};
use crate::error::{ensure_dims, Error, Result};
use crate::linalg::{affine_argmax_over_box, Hyperbox, Vector};
use crate::network::Layer;
use crate::repair::LinearConstraint;

pub const DEFAULT_RADIUS: f64 = 0.1;
/// Radius used for larger image models.
pub const LARGE_MODEL_RADIUS: f64 = 0.5;
pub const DEFAULT_BOX_ITERS: usize = 100;

/// An `ℓ∞` ball in feature space whose every point the head maps into the
/// valid output set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProxyBox {
    pub center: Vector,
    pub radius: f64,
}

impl ProxyBox {
    pub fn region(&self) -> Hyperbox {
        Hyperbox::around(&self.center, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub center: Vector,
    pub lb: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisFailure {
    /// `T_b` boxes were tried without certification.
    IterationLimit,
    /// The center returned to an earlier position.
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Synthesis {
    pub outcome: std::result::Result<ProxyBox, SynthesisFailure>,
    pub trajectory: Vec<TrajectoryStep>,
}

impl Synthesis {
    pub fn proxy(&self) -> Option<&ProxyBox> {
        self.outcome.as_ref().ok()
    }

    pub fn shifts(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }
}

pub fn synthesize_proxy_box(
    head: &[Layer],
    start: &[f64],
    constraints: &[LinearConstraint],
    radius: f64,
    max_iters: usize,
    opts: BoundOptions,
) -> Result<Synthesis> {
    if head.is_empty() {
        return Err(Error::InvalidArgument("empty classifier head".into()));
    }
    ensure_dims("proxy box start", head[0].in_dim(), start.len())?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("box radius {radius} must be positive")));
    }
    if max_iters == 0 {
        return Err(Error::InvalidArgument("box iterations must be at least 1".into()));
    }
    let mut center: Vector = start.into();
    let mut trajectory: Vec<TrajectoryStep> = Vec::new();
    for _ in 0..max_iters {
        let bx = Hyperbox::around(&center, radius);
        let report = linear_lower_bounds(head, &bx, constraints, opts)?;
        trajectory.push(TrajectoryStep {
            center: center.clone(),
            lb: report.lb.clone(),
        });
        if report.is_verified() {
            return Ok(Synthesis {
                outcome: Ok(ProxyBox { center, radius }),
                trajectory,
            });
        }
        let mut direction = vec![0.0; center.len()];
        for i in report.violated() {
            for (d, a) in direction.iter_mut().zip(report.bounds[i].coeffs.iter()) {
                *d += a;
            }
        }
        let next = affine_argmax_over_box(&direction, &bx)?;
        if trajectory.iter().any(|s| s.center == next) {
            return Ok(Synthesis {
                outcome: Err(SynthesisFailure::Stagnated),
                trajectory,
            });
        }
        center = next;
    }
    Ok(Synthesis {
        outcome: Err(SynthesisFailure::IterationLimit),
        trajectory,
    })
}

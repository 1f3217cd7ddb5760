//! Repair drivers.
//!
//! [`point_wise_repair`] pulls the extracted features of single inputs into
//! certified proxy boxes. [`region_wise_repair`] repeatedly generates
//! counterexamples from full-model bounds, repairs them point-wise, and
//! bisects properties it cannot yet verify.

mod point;
mod property;
mod region;

use std::time::Duration;

use serde::Serialize;

pub use point::point_wise_repair;
pub use property::{LinearConstraint, Property};
pub use region::{
    generate_counterexample, refine_property, refine_score, region_wise_repair, select_split_dim,
    CounterexampleReport,
};

use crate::autodiff::AdamConfig;
use crate::bounds::BoundOptions;
use crate::linalg::Vector;
use crate::network::Network;
use crate::preimage::{DEFAULT_BOX_ITERS, DEFAULT_RADIUS};

/// An input whose features should move to a certified proxy-box center.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointTask {
    pub input: Vector,
    pub center: Vector,
    pub label: String,
}

impl PointTask {
    pub fn new(input: impl Into<Vector>, center: impl Into<Vector>, label: impl Into<String>) -> Self {
        PointTask {
            input: input.into(),
            center: center.into(),
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepairConfig {
    /// Proxy-box radius `r`.
    pub radius: f64,
    /// Proxy-box shift limit `T_b`.
    pub box_iters: usize,
    /// Optimizer step limit `T_r` per point-wise repair.
    pub repair_iters: usize,
    /// Maximum number of live sub-properties in region-wise repair.
    pub budget: usize,
    pub adam: AdamConfig,
    pub bounds: BoundOptions,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            radius: DEFAULT_RADIUS,
            box_iters: DEFAULT_BOX_ITERS,
            repair_iters: 1000,
            budget: 10_000,
            adam: AdamConfig::default(),
            bounds: BoundOptions::default(),
        }
    }
}

impl RepairConfig {
    pub(crate) fn validate(&self, num_props: usize) -> crate::Result<()> {
        use crate::Error;
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius {} must be positive", self.radius)));
        }
        if self.box_iters == 0 || self.repair_iters == 0 || self.budget == 0 {
            return Err(Error::InvalidArgument("iteration limits and budget must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.adam.lr)));
        }
        if self.budget < num_props {
            return Err(Error::InvalidArgument(format!(
                "property budget {} is smaller than the {num_props} initial properties",
                self.budget
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FailureReason {
    /// No certified proxy box was found for a property.
    ProxySynthesis { label: String },
    /// `T_r` optimizer steps did not satisfy every point property.
    IterationLimit,
    /// Refinement pushed the number of sub-properties past the budget.
    Budget,
    /// A property still needs refinement but has no splittable width left.
    ResolutionExhausted { label: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStatus {
    Repaired,
    Failed(FailureReason),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RoundRecord {
    pub properties: usize,
    pub violated: usize,
    pub counterexamples: usize,
    pub optimizer_steps: usize,
    pub loss: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RepairStats {
    pub rounds: Vec<RoundRecord>,
    pub refinements: usize,
    pub optimizer_steps: usize,
    pub final_properties: usize,
    /// Point tasks whose feature ended within `r` of its proxy center.
    pub tasks_within_radius: usize,
    pub tasks: usize,
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug, Clone)]
pub struct RepairOutcome {
    pub status: RepairStatus,
    pub network: Network,
    pub stats: RepairStats,
}

impl RepairOutcome {
    pub fn is_repaired(&self) -> bool {
        self.status == RepairStatus::Repaired
    }
}

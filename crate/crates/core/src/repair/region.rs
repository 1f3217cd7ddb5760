use std::collections::HashSet;
use std::time::Instant;

use log::info;
use serde::Serialize;

use super::point::repair_points;
use super::{FailureReason, Property, RepairConfig, RepairOutcome, RepairStats, RepairStatus, RoundRecord};
use crate::bounds::{linear_lower_bounds, BoundOptions, BoundReport};
use crate::error::{Error, Result};
use crate::linalg::{affine_argmax_over_box, Vector};
use crate::network::Network;

/// Full-model bound report for one property plus what it implies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub report: BoundReport,
    /// Constraints whose lower bound is negative.
    pub violated: Vec<usize>,
    /// Input minimizing the summed lower bounds of the violated constraints.
    pub candidate: Option<Vector>,
    /// `candidate`, if the network really violates the property there.
    pub counterexample: Option<Vector>,
    pub refine_score: Option<Vector>,
}

impl CounterexampleReport {
    pub fn is_verified(&self) -> bool {
        self.violated.is_empty()
    }
}

pub fn generate_counterexample(net: &Network, prop: &Property, opts: BoundOptions) -> Result<CounterexampleReport> {
    prop.check_against(net)?;
    let report = linear_lower_bounds(net.layers(), prop.input(), prop.constraints(), opts)?;
    let violated = report.violated();
    if violated.is_empty() {
        return Ok(CounterexampleReport {
            report,
            violated,
            candidate: None,
            counterexample: None,
            refine_score: None,
        });
    }
    let mut direction = vec![0.0; net.input_dim()];
    for &i in &violated {
        for (d, w) in direction.iter_mut().zip(report.bounds[i].coeffs.iter()) {
            *d -= w;
        }
    }
    let candidate = affine_argmax_over_box(&direction, prop.input())?;
    let counterexample = (!net.satisfies(&candidate, prop)).then(|| candidate.clone());
    let refine_score = Some(refine_score(prop, &report)?);
    Ok(CounterexampleReport {
        report,
        violated,
        candidate: Some(candidate),
        counterexample,
        refine_score,
    })
}

/// Per-dimension splitting priority: input width times the summed absolute
/// coefficients of the violated constraints' lower bounds.
pub fn refine_score(prop: &Property, report: &BoundReport) -> Result<Vector> {
    let violated = report.violated();
    if violated.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "property '{}' has no violated constraints to score",
            prop.label()
        )));
    }
    let bx = prop.input();
    Ok((0..bx.dim())
        .map(|i| {
            let w = bx.width(i);
            if w == 0.0 {
                return 0.0;
            }
            w * violated
                .iter()
                .map(|&c| report.bounds[c].coeffs[i].abs())
                .sum::<f64>()
        })
        .collect())
}

/// Bisects the input box along `dim`; the children keep every constraint.
pub fn refine_property(prop: &Property, dim: usize) -> Result<(Property, Property)> {
    let (lo, hi) = prop.input().bisect(dim)?;
    Ok((
        prop.with_input(lo, format!("{}.{dim}l", prop.label())),
        prop.with_input(hi, format!("{}.{dim}u", prop.label())),
    ))
}

/// Highest-scoring dimension that can still be halved, first index on ties.
pub fn select_split_dim(prop: &Property, score: &[f64]) -> Option<usize> {
    let bx = prop.input();
    let mut best: Option<usize> = None;
    for i in 0..bx.dim() {
        let (l, u) = (bx.lower()[i], bx.upper()[i]);
        let mid = 0.5 * (l + u);
        if !(mid > l && mid < u) {
            continue;
        }
        if best.is_none_or(|b| score[i] > score[b]) {
            best = Some(i);
        }
    }
    best
}

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

struct Archive {
    points: Vec<Property>,
    centers: Vec<Option<Vector>>,
    seen: HashSet<Vec<u64>>,
}

impl Archive {
    fn add(&mut self, x: &Vector, parent: &Property) -> bool {
        if !self.seen.insert(bits(x)) {
            return false;
        }
        let label = format!("{}@cex{}", parent.label(), self.points.len());
        self.points.push(parent.with_input(crate::linalg::Hyperbox::point(x.clone()), label));
        self.centers.push(None);
        true
    }

    /// Archives every new confirmed counterexample; returns how many.
    fn collect(&mut self, reports: &[CounterexampleReport], props: &[Property]) -> usize {
        let mut added = 0;
        for (r, p) in reports.iter().zip(props) {
            if let Some(x) = &r.counterexample {
                if self.add(x, p) {
                    added += 1;
                }
            }
        }
        added
    }
}

fn verify_all(net: &Network, props: &[Property], opts: BoundOptions) -> Result<Vec<CounterexampleReport>> {
    opts.exec
        .map(props, |p| generate_counterexample(net, p, opts))
        .into_iter()
        .collect()
}

/// Repairs `net` until bound propagation verifies every property over its
/// whole input box. `Repaired` is only returned after such a verification.
pub fn region_wise_repair(net: &Network, props: &[Property], cfg: &RepairConfig) -> Result<RepairOutcome> {
    cfg.validate(props.len())?;
    if props.is_empty() {
        return Err(Error::Empty("property set"));
    }
    for p in props {
        p.check_against(net)?;
    }
    let start = Instant::now();
    let mut stats = RepairStats::default();
    let mut live: Vec<Property> = props.to_vec();
    let mut archive = Archive {
        points: vec![],
        centers: vec![],
        seen: HashSet::new(),
    };
    let mut cur = net.clone();

    let finish = |status, network, mut stats: RepairStats, live: usize| {
        stats.final_properties = live;
        stats.wall_time = start.elapsed();
        Ok(RepairOutcome {
            status,
            network,
            stats,
        })
    };

    let mut reports = verify_all(&cur, &live, cfg.bounds)?;
    if reports.iter().all(CounterexampleReport::is_verified) {
        return finish(RepairStatus::Repaired, cur, stats, live.len());
    }
    let mut pending = archive.collect(&reports, &live);

    loop {
        let mut record = RoundRecord {
            properties: live.len(),
            violated: reports.iter().filter(|r| !r.is_verified()).count(),
            counterexamples: pending,
            ..RoundRecord::default()
        };
        info!(
            "round {}: {} properties, {} unverified, {} new counterexamples",
            stats.rounds.len(),
            record.properties,
            record.violated,
            record.counterexamples
        );

        if !archive.points.is_empty() {
            let items: Vec<(&Property, Option<Vector>)> = archive
                .points
                .iter()
                .zip(&archive.centers)
                .map(|(p, c)| (p, c.clone()))
                .collect();
            let run = repair_points(cur, &items, cfg, &mut record)?;
            cur = run.network;
            archive.centers = run.centers;
            stats.optimizer_steps += record.optimizer_steps;
            stats.tasks = archive.points.len();
            stats.tasks_within_radius = run.within_radius;
            if let Some(f) = run.failure {
                stats.rounds.push(record);
                return finish(RepairStatus::Failed(f), cur, stats, live.len());
            }
        }
        stats.rounds.push(record);

        reports = verify_all(&cur, &live, cfg.bounds)?;
        if reports.iter().all(CounterexampleReport::is_verified) {
            return finish(RepairStatus::Repaired, cur, stats, live.len());
        }
        pending = archive.collect(&reports, &live);

        // children inherit the parent's bounds until the next verification
        let mut next = Vec::with_capacity(live.len() * 2);
        for (p, r) in live.iter().zip(&reports) {
            let Some(score) = &r.refine_score else {
                next.push(p.clone());
                continue;
            };
            let Some(dim) = select_split_dim(p, score) else {
                let reason = FailureReason::ResolutionExhausted {
                    label: p.label().to_string(),
                };
                return finish(RepairStatus::Failed(reason), cur, stats, live.len());
            };
            let (lo, hi) = refine_property(p, dim)?;
            next.push(lo);
            next.push(hi);
            stats.refinements += 1;
        }
        live = next;
        if live.len() > cfg.budget {
            return finish(RepairStatus::Failed(FailureReason::Budget), cur, stats, live.len());
        }
        reports = verify_all(&cur, &live, cfg.bounds)?;
    }
}

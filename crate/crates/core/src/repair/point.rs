use std::time::Instant;

use log::{debug, info};

use super::{FailureReason, PointTask, Property, RepairConfig, RepairOutcome, RepairStats, RepairStatus, RoundRecord};
use crate::autodiff::{backward, repair_loss, AdamState};
use crate::error::{Error, Result};
use crate::linalg::{euclidean_distance, Vector};
use crate::network::Network;
use crate::preimage::synthesize_proxy_box;

pub(crate) struct PointRun {
    pub network: Network,
    pub failure: Option<FailureReason>,
    /// Certified centers, aligned with the input items. `None` when the
    /// run never needed one.
    pub centers: Vec<Option<Vector>>,
    pub within_radius: usize,
}

fn all_satisfied(net: &Network, props: &[&Property], cfg: &RepairConfig) -> bool {
    cfg.bounds
        .exec
        .map(props, |p| net.satisfies(p.input().lower(), p))
        .into_iter()
        .all(|ok| ok)
}

/// Point-wise repair over `items`, reusing any known certified centers.
/// Centers stay valid across calls because the head is never modified.
pub(crate) fn repair_points(
    net: Network,
    items: &[(&Property, Option<Vector>)],
    cfg: &RepairConfig,
    record: &mut RoundRecord,
) -> Result<PointRun> {
    let props: Vec<&Property> = items.iter().map(|(p, _)| *p).collect();
    if all_satisfied(&net, &props, cfg) {
        return Ok(PointRun {
            network: net,
            failure: None,
            centers: items.iter().map(|(_, c)| c.clone()).collect(),
            within_radius: 0,
        });
    }

    let synthesized = cfg.bounds.exec.map(items, |(p, known)| -> Result<Option<Vector>> {
        if let Some(c) = known {
            return Ok(Some(c.clone()));
        }
        let h0 = net.forward_features(p.input().lower())?;
        let s = synthesize_proxy_box(
            &net.head(),
            &h0,
            p.constraints(),
            cfg.radius,
            cfg.box_iters,
            cfg.bounds,
        )?;
        debug!("proxy box for {}: {} shifts, {:?}", p.label(), s.shifts(), s.outcome.as_ref().err());
        Ok(s.proxy().map(|b| b.center.clone()))
    });
    let mut centers = Vec::with_capacity(items.len());
    for (r, (p, _)) in synthesized.into_iter().zip(items) {
        match r? {
            Some(c) => centers.push(c),
            None => {
                return Ok(PointRun {
                    network: net,
                    failure: Some(FailureReason::ProxySynthesis {
                        label: p.label().to_string(),
                    }),
                    centers: items.iter().map(|(_, c)| c.clone()).collect(),
                    within_radius: 0,
                })
            }
        }
    }

    let tasks: Vec<PointTask> = props
        .iter()
        .zip(&centers)
        .map(|(p, c)| PointTask::new(p.input().lower().clone(), c.clone(), p.label()))
        .collect();

    let mut adam = AdamState::for_extractor(cfg.adam, &net);
    let mut cur = net;
    let mut failure = Some(FailureReason::IterationLimit);
    for _ in 0..cfg.repair_iters {
        if all_satisfied(&cur, &props, cfg) {
            failure = None;
            break;
        }
        record.loss.push(repair_loss(&cur, &tasks)?);
        let grads = backward(&cur, &tasks, cfg.bounds.exec)?;
        cur = adam.step(&cur, &grads);
        record.optimizer_steps += 1;
    }

    let within_radius = tasks
        .iter()
        .filter(|t| {
            let h = cur.forward_features(&t.input).expect("dims checked");
            euclidean_distance(&h, &t.center) <= cfg.radius
        })
        .count();
    info!(
        "point repair: {} steps, {} of {} tasks within radius, failure {:?}",
        record.optimizer_steps,
        within_radius,
        tasks.len(),
        failure
    );
    Ok(PointRun {
        network: cur,
        failure,
        centers: centers.into_iter().map(Some).collect(),
        within_radius,
    })
}

/// Repairs `net` so that every point property holds under direct forward
/// evaluation. Only the feature extractor changes.
pub fn point_wise_repair(net: &Network, props: &[Property], cfg: &RepairConfig) -> Result<RepairOutcome> {
    cfg.validate(props.len())?;
    for p in props {
        p.check_against(net)?;
        if !p.is_point() {
            return Err(Error::InvalidProperty(format!(
                "point-wise repair needs a single-point input, '{}' is a region",
                p.label()
            )));
        }
    }
    let start = Instant::now();
    let mut record = RoundRecord {
        properties: props.len(),
        ..RoundRecord::default()
    };
    record.violated = props.iter().filter(|p| !net.satisfies(p.input().lower(), p)).count();
    let items: Vec<(&Property, Option<Vector>)> = props.iter().map(|p| (p, None)).collect();
    let run = repair_points(net.clone(), &items, cfg, &mut record)?;
    let stats = RepairStats {
        optimizer_steps: record.optimizer_steps,
        final_properties: props.len(),
        tasks_within_radius: run.within_radius,
        tasks: props.len(),
        rounds: vec![record],
        refinements: 0,
        wall_time: start.elapsed(),
    };
    Ok(RepairOutcome {
        status: match run.failure {
            None => RepairStatus::Repaired,
            Some(f) => RepairStatus::Failed(f),
        },
        network: run.network,
        stats,
    })
}

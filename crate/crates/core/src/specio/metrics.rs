use serde::Serialize;

use super::Dataset;
use crate::bounds::BoundOptions;
use crate::error::{ensure_dims, Error, Result};
use crate::network::{argmax, Network};
use crate::repair::{generate_counterexample, Property};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Fraction of test rows whose argmax matches the label.
    pub acc: f64,
    /// Fraction of repair properties satisfied, `None` without properties.
    pub psr: Option<f64>,
    /// Fraction of generalization properties satisfied.
    pub gene: Option<f64>,
}

/// Point properties are checked by evaluation, regions by bound
/// verification.
pub fn property_holds(net: &Network, p: &Property, opts: BoundOptions) -> Result<bool> {
    p.check_against(net)?;
    if p.is_point() {
        return Ok(net.satisfies(p.input().lower(), p));
    }
    Ok(generate_counterexample(net, p, opts)?.is_verified())
}

fn rate(net: &Network, props: &[Property], opts: BoundOptions) -> Result<Option<f64>> {
    if props.is_empty() {
        return Ok(None);
    }
    let held = opts
        .exec
        .map(props, |p| property_holds(net, p, opts))
        .into_iter()
        .collect::<Result<Vec<bool>>>()?;
    Ok(Some(held.iter().filter(|&&h| h).count() as f64 / props.len() as f64))
}

pub fn eval_metrics(
    net: &Network,
    test: &Dataset,
    repair_props: &[Property],
    gene_props: &[Property],
    opts: BoundOptions,
) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test dataset"));
    }
    ensure_dims("test rows", net.input_dim(), test.dim())?;
    test.check_labels(net.output_dim())?;
    let hits = opts
        .exec
        .map(test.inputs(), |x| argmax(&net.forward(x).expect("dims checked")))
        .into_iter()
        .zip(test.labels())
        .filter(|(p, y)| p == *y)
        .count();
    Ok(Metrics {
        acc: hits as f64 / test.len() as f64,
        psr: rate(net, repair_props, opts)?,
        gene: rate(net, gene_props, opts)?,
    })
}

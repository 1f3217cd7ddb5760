//! Reverse-mode gradients for dense layer stacks and the Adam optimizer that
//! drives the repair loss.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::exec::Exec;
use crate::linalg::{euclidean_distance, Matrix, Vector};
use crate::network::{Layer, Network};
use crate::repair::PointTask;

/// Gradients for a prefix of a network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl ParamGrads {
    pub fn zeros_like(layers: &[Layer]) -> Self {
        ParamGrads {
            weights: layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: layers.iter().map(|l| Vector::zeros(l.out_dim())).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.weights {
            w.data_mut().iter_mut().for_each(|x| *x *= s);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.data().iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Backpropagates through `layers` at input `x`. `output_grad` maps the
/// stack's output to `∂loss/∂output`. Returns the output and the parameter
/// gradients.
pub fn backprop<F>(layers: &[Layer], x: &[f64], output_grad: F) -> (Vec<f64>, ParamGrads)
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut a = x.to_vec();
    for l in layers {
        let z = l.pre_activation(&a);
        let next = z.iter().map(|&v| l.activation.apply(v)).collect();
        inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
    }
    let mut delta = output_grad(&a);
    let mut grads = ParamGrads::zeros_like(layers);
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        for (d, &z) in delta.iter_mut().zip(&pre[i]) {
            *d *= l.activation.derivative(z);
        }
        let gw = &mut grads.weights[i];
        let cols = l.in_dim();
        for (r, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut gw.data_mut()[r * cols..(r + 1) * cols];
            for (g, &inp) in row.iter_mut().zip(&inputs[i]) {
                *g = d * inp;
            }
        }
        grads.biases[i] = delta.clone().into();
        if i > 0 {
            delta = l.weights.vec_mul(&delta);
        }
    }
    (a, grads)
}

fn check_tasks(net: &Network, tasks: &[PointTask]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::Empty("repair task set"));
    }
    for t in tasks {
        ensure_dims("task input", net.input_dim(), t.input.len())?;
        ensure_dims("task center", net.feature_dim(), t.center.len())?;
    }
    Ok(())
}

/// Mean Euclidean distance between extracted features and proxy centers.
pub fn repair_loss(net: &Network, tasks: &[PointTask]) -> Result<f64> {
    check_tasks(net, tasks)?;
    let total: f64 = tasks
        .iter()
        .map(|t| {
            let h = net.forward_features(&t.input).expect("dims checked");
            euclidean_distance(&h, &t.center)
        })
        .sum();
    Ok(total / tasks.len() as f64)
}

const TASK_CHUNK: usize = 8;

/// Gradient of [`repair_loss`] with respect to the extractor parameters.
/// Tasks are processed in fixed-size chunks and summed in task order, so
/// the result does not depend on the execution strategy.
pub fn backward(net: &Network, tasks: &[PointTask], exec: Exec) -> Result<ParamGrads> {
    check_tasks(net, tasks)?;
    let extractor = &net.extractor();
    let chunks: Vec<&[PointTask]> = tasks.chunks(TASK_CHUNK).collect();
    let partial = exec.map(&chunks, |chunk| {
        let mut acc = ParamGrads::zeros_like(extractor);
        for t in chunk.iter() {
            let (_, g) = backprop(extractor, &t.input, |h| {
                let dist = euclidean_distance(h, &t.center);
                if dist < 1e-12 {
                    vec![0.0; h.len()]
                } else {
                    h.iter().zip(t.center.iter()).map(|(a, b)| (a - b) / dist).collect()
                }
            });
            acc.add_assign(&g);
        }
        acc
    });
    let mut total = ParamGrads::zeros_like(extractor);
    for p in &partial {
        total.add_assign(p);
    }
    total.scale(1.0 / tasks.len() as f64);
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: ParamGrads,
    second: ParamGrads,
    step: u64,
}

impl AdamState {
    /// Zeroed moments shaped like the first `layers.len()` layers.
    pub fn new(config: AdamConfig, layers: &[Layer]) -> Self {
        AdamState {
            config,
            first: ParamGrads::zeros_like(layers),
            second: ParamGrads::zeros_like(layers),
            step: 0,
        }
    }

    pub fn for_extractor(config: AdamConfig, net: &Network) -> Self {
        Self::new(config, &net.extractor())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update to the first
    /// `grads.num_layers()` layers of `net` and returns the new snapshot. The
    /// remaining layers are copied untouched.
    pub fn step(&mut self, net: &Network, grads: &ParamGrads) -> Network {
        let mut out = net.clone();
        self.apply(out.layers_mut(), grads);
        out
    }

    pub(crate) fn apply(&mut self, layers: &mut [Layer], grads: &ParamGrads) {
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        };
        for (i, layer) in layers.iter_mut().take(grads.num_layers()).enumerate() {
            update(
                layer.weights.data_mut(),
                grads.weights[i].data(),
                self.first.weights[i].data_mut(),
                self.second.weights[i].data_mut(),
            );
            update(
                &mut layer.bias,
                &grads.biases[i],
                &mut self.first.biases[i],
                &mut self.second.biases[i],
            );
        }
    }
}

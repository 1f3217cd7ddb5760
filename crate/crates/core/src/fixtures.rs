//! Seeded synthetic models and data for tests, benches and demos.
//!
//! The digit fixture stands in for a small image-classification benchmark:
//! 28×28 grayscale images of ten stroke-drawn glyphs, jittered and noised.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backprop, AdamConfig, AdamState, ParamGrads};
use crate::exec::Exec;
use crate::linalg::{Hyperbox, Matrix, Vector};
use crate::network::{argmax, ActivationKind, Layer, Network};
use crate::specio::Dataset;

pub const DIGIT_SIDE: usize = 28;
pub const DIGIT_PIXELS: usize = DIGIT_SIDE * DIGIT_SIDE;
pub const DIGIT_CLASSES: usize = 10;

/// Dense network with layer widths `dims`, weights in `U(-1, 1)`, biases in
/// `U(-0.5, 0.5)`, `act` on hidden layers and identity on the last.
pub fn random_network(rng: &mut ChaCha8Rng, dims: &[usize], act: ActivationKind) -> Network {
    assert!(dims.len() >= 3, "need at least two layers");
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let data = (0..w[0] * w[1]).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias: Vec<f64> = (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let a = if i + 2 == dims.len() { ActivationKind::Identity } else { act };
            Layer::new(Matrix::new(w[1], w[0], data).unwrap(), bias, a).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// He-uniform initialised ReLU classifier, suitable for training.
pub fn init_classifier(rng: &mut ChaCha8Rng, dims: &[usize]) -> Network {
    assert!(dims.len() >= 3, "need at least two layers");
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let lim = (6.0 / w[0] as f64).sqrt();
            let data = (0..w[0] * w[1]).map(|_| rng.gen_range(-lim..lim)).collect();
            let a = if i + 2 == dims.len() {
                ActivationKind::Identity
            } else {
                ActivationKind::Relu
            };
            Layer::new(Matrix::new(w[1], w[0], data).unwrap(), vec![0.0; w[1]], a).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Random box inside `[-1, 1]^dim` with side lengths up to `max_width`.
pub fn random_box(rng: &mut ChaCha8Rng, dim: usize, max_width: f64) -> Hyperbox {
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    for _ in 0..dim {
        let w = rng.gen_range(0.0..=max_width);
        let l = rng.gen_range(-1.0..1.0 - w.min(1.99));
        lo.push(l);
        hi.push(l + w);
    }
    Hyperbox::new(lo, hi).unwrap()
}

/// Uniform sample from `bx`.
pub fn sample_box(rng: &mut ChaCha8Rng, bx: &Hyperbox) -> Vec<f64> {
    bx.lower()
        .iter()
        .zip(bx.upper().iter())
        .map(|(&l, &u)| if u > l { rng.gen_range(l..=u) } else { l })
        .collect()
}

type Stroke = ((f64, f64), (f64, f64));

fn glyph_strokes(class: usize) -> &'static [Stroke] {
    // seven-segment style glyphs on a 0..1 square plus a few diagonals so
    // that no two classes share every stroke
    const TOP: Stroke = ((0.25, 0.2), (0.75, 0.2));
    const MID: Stroke = ((0.25, 0.5), (0.75, 0.5));
    const BOT: Stroke = ((0.25, 0.8), (0.75, 0.8));
    const UL: Stroke = ((0.25, 0.2), (0.25, 0.5));
    const UR: Stroke = ((0.75, 0.2), (0.75, 0.5));
    const LL: Stroke = ((0.25, 0.5), (0.25, 0.8));
    const LR: Stroke = ((0.75, 0.5), (0.75, 0.8));
    const CEN: Stroke = ((0.5, 0.15), (0.5, 0.85));
    const DIAG: Stroke = ((0.75, 0.2), (0.3, 0.8));
    match class {
        0 => &[TOP, BOT, UL, UR, LL, LR],
        1 => &[CEN, ((0.4, 0.25), (0.5, 0.15))],
        2 => &[TOP, UR, MID, LL, BOT],
        3 => &[TOP, UR, MID, LR, BOT],
        4 => &[UL, MID, UR, LR],
        5 => &[TOP, UL, MID, LR, BOT],
        6 => &[TOP, UL, LL, MID, LR, BOT],
        7 => &[TOP, DIAG],
        8 => &[TOP, MID, BOT, UL, UR, LL, LR],
        9 => &[TOP, UL, UR, MID, LR],
        _ => panic!("digit class {class} out of range"),
    }
}

fn segment_distance(p: (f64, f64), (a, b): Stroke) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// One jittered, noisy image of `class`, pixels in `[0, 1]`.
pub fn render_digit(rng: &mut ChaCha8Rng, class: usize) -> Vector {
    let strokes = glyph_strokes(class);
    let scale = rng.gen_range(0.85..1.1);
    let shift = (rng.gen_range(-0.08..0.08), rng.gen_range(-0.08..0.08));
    let slant = rng.gen_range(-0.15..0.15);
    let thickness = rng.gen_range(0.045..0.075);
    let ink = rng.gen_range(0.7..1.0);
    let side = DIGIT_SIDE as f64;
    let mut img = Vec::with_capacity(DIGIT_PIXELS);
    for r in 0..DIGIT_SIDE {
        for c in 0..DIGIT_SIDE {
            // map the pixel back into glyph coordinates
            let y = ((r as f64 + 0.5) / side - 0.5 - shift.1) / scale + 0.5;
            let x = ((c as f64 + 0.5) / side - 0.5 - shift.0) / scale + 0.5 - slant * (y - 0.5);
            let d = strokes
                .iter()
                .map(|&s| segment_distance((x, y), s))
                .fold(f64::INFINITY, f64::min);
            let v = ink * (1.0 - (d / thickness).powi(2)).max(0.0).sqrt();
            let noise = rng.gen_range(-0.1..0.1);
            img.push((v + noise).clamp(0.0, 1.0));
        }
    }
    img.into()
}

/// `per_class` images of each digit, classes interleaved.
pub fn digit_dataset(rng: &mut ChaCha8Rng, per_class: usize) -> Dataset {
    let mut inputs = Vec::with_capacity(per_class * DIGIT_CLASSES);
    let mut labels = Vec::with_capacity(per_class * DIGIT_CLASSES);
    for _ in 0..per_class {
        for class in 0..DIGIT_CLASSES {
            inputs.push(render_digit(rng, class));
            labels.push(class);
        }
    }
    Dataset::new(inputs, labels).unwrap()
}

/// Heavy pixel noise plus a blanked square patch, clamped to `[0, 1]`.
pub fn corrupt(rng: &mut ChaCha8Rng, x: &[f64]) -> Vector {
    let mut out: Vec<f64> = x.iter().map(|v| (v + rng.gen_range(-0.45..0.45)).clamp(0.0, 1.0)).collect();
    let size = 9;
    let r0 = rng.gen_range(0..=DIGIT_SIDE - size);
    let c0 = rng.gen_range(0..=DIGIT_SIDE - size);
    for r in r0..r0 + size {
        for c in c0..c0 + size {
            out[r * DIGIT_SIDE + c] = 0.0;
        }
    }
    out.into()
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub adam: AdamConfig,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 8,
            batch: 32,
            adam: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            exec: Exec::default(),
        }
    }
}

fn softmax_xent_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.iter()
        .enumerate()
        .map(|(j, e)| e / s - if j == label { 1.0 } else { 0.0 })
        .collect()
}

/// Mini-batch Adam on softmax cross-entropy over every layer. Batches are
/// visited in a seeded shuffled order.
pub fn train_classifier(mut net: Network, data: &Dataset, cfg: TrainConfig, rng: &mut ChaCha8Rng) -> Network {
    let mut adam = AdamState::new(cfg.adam, net.layers());
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for batch in order.chunks(cfg.batch) {
            let grads = cfg.exec.map(batch, |&i| {
                let label = data.labels()[i];
                backprop(net.layers(), &data.inputs()[i], |y| softmax_xent_grad(y, label)).1
            });
            let mut total = ParamGrads::zeros_like(net.layers());
            for g in &grads {
                total.add_assign(g);
            }
            total.scale(1.0 / batch.len() as f64);
            adam.apply(net.layers_mut(), &total);
        }
    }
    net
}

/// Fraction of `data` whose argmax output equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .iter()
        .filter(|(x, y)| argmax(&net.forward(x).expect("dataset width matches")) == *y)
        .count();
    hits as f64 / data.len() as f64
}

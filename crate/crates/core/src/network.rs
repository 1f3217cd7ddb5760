//! Dense feedforward networks and the feature-extractor / head split.
//!
//! A network `f` is a chain of layers `z_k = W_k a_{k-1} + b_k`,
//! `a_k = σ_k(z_k)`. The split index `k` divides it into the feature
//! extractor `layers[..k]` and the classifier head `layers[k..]`; repair only
//! ever touches the extractor.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dims, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::repair::Property;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::LeakyRelu(a) => {
                if z >= 0.0 {
                    z
                } else {
                    a * z
                }
            }
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Identity => z,
        }
    }

    /// Derivative, taking the subgradient 0 for ReLU at the kink and the
    /// identity branch for LeakyReLU.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu(a) => {
                if z >= 0.0 {
                    1.0
                } else {
                    a
                }
            }
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::Identity => 1.0,
        }
    }

    pub fn is_identity(self) -> bool {
        self == ActivationKind::Identity
    }

    fn validate(self) -> Result<()> {
        match self {
            ActivationKind::LeakyRelu(a) if !(a > 0.0 && a < 1.0) => Err(Error::InvalidArgument(
                format!("leaky relu slope {a} must lie in (0, 1)"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vector,
    pub activation: ActivationKind,
}

impl Layer {
    pub fn new(weights: Matrix, bias: impl Into<Vector>, activation: ActivationKind) -> Result<Self> {
        let bias = bias.into();
        ensure_dims("layer bias", weights.rows(), bias.len())?;
        activation.validate()?;
        Ok(Layer {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.mul_vec(x);
        for (zi, bi) in z.iter_mut().zip(self.bias.iter()) {
            *zi += bi;
        }
        z
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.pre_activation(x);
        for v in &mut z {
            *v = self.activation.apply(*v);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct Network {
    layers: Vec<Layer>,
    split: usize,
}

#[derive(Deserialize)]
struct RawNetwork {
    layers: Vec<Layer>,
    split: Option<usize>,
}

impl TryFrom<RawNetwork> for Network {
    type Error = Error;
    fn try_from(raw: RawNetwork) -> Result<Self> {
        let net = Network::new(raw.layers)?;
        match raw.split {
            Some(k) => net.with_split(k),
            None => Ok(net),
        }
    }
}

impl Network {
    /// Validates the layer chain and places the split with
    /// [`default_split`].
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least 2 layers to split, got {}",
                layers.len()
            )));
        }
        for w in layers.windows(2) {
            ensure_dims("layer chain", w[0].out_dim(), w[1].in_dim())?;
        }
        for l in &layers {
            ensure_dims("layer bias", l.out_dim(), l.bias.len())?;
            l.activation.validate()?;
        }
        if !layers.last().unwrap().activation.is_identity() {
            return Err(Error::InvalidArgument(
                "final layer must use the identity activation (raw logits)".into(),
            ));
        }
        let split = default_split(&layers);
        Ok(Network { layers, split })
    }

    pub fn with_split(mut self, split: usize) -> Result<Self> {
        if split == 0 || split >= self.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "split index {split} must lie in 1..{}",
                self.layers.len()
            )));
        }
        self.split = split;
        Ok(self)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[self.split - 1].out_dim()
    }

    /// `layers[..split]` with the activation of the last one dropped: the
    /// feature is that layer's pre-activation output.
    pub fn extractor(&self) -> Vec<Layer> {
        let mut fe = self.layers[..self.split].to_vec();
        fe.last_mut().unwrap().activation = ActivationKind::Identity;
        fe
    }

    /// The activation of layer `split - 1` (as an identity-weight layer,
    /// omitted when it is the identity) followed by `layers[split..]`.
    pub fn head(&self) -> Vec<Layer> {
        let act = self.layers[self.split - 1].activation;
        let mut fc = Vec::with_capacity(self.layers.len() - self.split + 1);
        if !act.is_identity() {
            let s = self.feature_dim();
            fc.push(Layer {
                weights: Matrix::identity(s),
                bias: Vector::zeros(s),
                activation: act,
            });
        }
        fc.extend_from_slice(&self.layers[self.split..]);
        fc
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        ensure_dims("network input", self.input_dim(), x.len())?;
        Ok(run_layers(&self.layers, x).into())
    }

    pub fn forward_features(&self, x: &[f64]) -> Result<Vector> {
        ensure_dims("network input", self.input_dim(), x.len())?;
        let k = self.split;
        let a = run_layers(&self.layers[..k - 1], x);
        Ok(self.layers[k - 1].pre_activation(&a).into())
    }

    pub fn forward_head(&self, h: &[f64]) -> Result<Vector> {
        ensure_dims("feature vector", self.feature_dim(), h.len())?;
        let act = self.layers[self.split - 1].activation;
        let a: Vec<f64> = h.iter().map(|&z| act.apply(z)).collect();
        Ok(run_layers(&self.layers[self.split..], &a).into())
    }

    /// True iff every constraint of `prop` evaluates `≥ 0` on `f(x)`.
    pub fn satisfies(&self, x: &[f64], prop: &Property) -> bool {
        match self.forward(x) {
            Ok(y) => prop.holds_on_output(&y),
            Err(_) => false,
        }
    }

    pub fn argmax(&self, x: &[f64]) -> Result<usize> {
        let y = self.forward(x)?;
        Ok(argmax(&y))
    }
}

pub(crate) fn run_layers(layers: &[Layer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for l in layers {
        a = l.forward(&a);
    }
    a
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in y.iter().enumerate() {
        if v > y[best] {
            best = i;
        }
    }
    best
}

/// Puts exactly one activation into the head for networks of at most eight
/// layers and two for deeper ones. The head always starts with the
/// activation of layer `split - 1`.
pub fn default_split(layers: &[Layer]) -> usize {
    let n = layers.len();
    let head_activations = if n <= 8 { 1 } else { 2 };
    n.saturating_sub(head_activations).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_network;
    use crate::linalg::Hyperbox;
    use crate::repair::{LinearConstraint, Property};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_net(n: usize) -> Network {
        let l = || Layer::new(Matrix::identity(n), vec![0.0; n], ActivationKind::Identity).unwrap();
        Network::new(vec![l(), l()]).unwrap()
    }

    #[test]
    fn identity_forward() {
        let net = identity_net(3);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap().into_inner(), vec![1.0, -2.0, 3.0]);
        assert_eq!(net.forward_features(&[1.0, -2.0, 3.0]).unwrap().into_inner(), vec![1.0, -2.0, 3.0]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn relu_clamps() {
        let relu = Layer::new(Matrix::identity(1), vec![-1.0], ActivationKind::Relu).unwrap();
        assert_eq!(relu.forward(&[0.5]), vec![0.0]);
    }

    #[test]
    fn split_composition_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = random_network(&mut rng, &[4, 8, 6, 5, 3], ActivationKind::Relu);
        for k in 1..net.num_layers() {
            let net = net.clone().with_split(k).unwrap();
            for _ in 0..250 {
                let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let h = net.forward_features(&x).unwrap();
                assert_eq!(net.forward_head(&h).unwrap(), net.forward(&x).unwrap());
                assert_eq!(run_layers(&net.extractor(), &x), h.into_inner());
                let y = run_layers(&net.head(), &net.forward_features(&x).unwrap());
                assert_eq!(y, net.forward(&x).unwrap().into_inner());
            }
        }
    }

    #[test]
    fn default_split_placement() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let three = random_network(&mut rng, &[2, 7, 5, 3], ActivationKind::Relu);
        assert_eq!(three.split(), 2);
        assert_eq!(three.feature_dim(), 5);
        assert_eq!(three.head().len(), 2);
        let three = three.with_split(1).unwrap();
        assert_eq!(three.feature_dim(), 7);
        assert_eq!(three.head().len(), 3);
        let two = random_network(&mut rng, &[2, 4, 3], ActivationKind::Relu);
        assert_eq!(two.split(), 1);
        let dims: Vec<usize> = vec![4; 11];
        let deep = random_network(&mut rng, &dims, ActivationKind::Relu);
        assert_eq!(deep.num_layers(), 10);
        assert_eq!(deep.split(), 8);
        let acts = deep.head().iter().filter(|l| !l.activation.is_identity()).count();
        assert_eq!(acts, 2);
    }

    #[test]
    fn rejects_bad_split_and_activation_output() {
        let net = identity_net(2);
        assert!(net.clone().with_split(0).is_err());
        assert!(net.with_split(2).is_err());
        let l = Layer::new(Matrix::identity(1), vec![0.0], ActivationKind::Relu).unwrap();
        assert!(Network::new(vec![l.clone(), l]).is_err());
        assert!(Layer::new(Matrix::identity(1), vec![0.0], ActivationKind::LeakyRelu(1.5)).is_err());
    }

    #[test]
    fn satisfies_examples() {
        let net = identity_net(1);
        let prop = Property::new(
            Hyperbox::point(vec![0.5]),
            vec![LinearConstraint::new(vec![1.0], 0.0)],
            "pos",
        )
        .unwrap();
        assert!(net.satisfies(&[0.5], &prop));
        assert!(!net.satisfies(&[-0.5], &prop));
    }

    #[test]
    fn classification_encoding_matches_argmax() {
        let net = identity_net(3);
        for (x, y) in [([0.1, 0.9, 0.3], 1usize), ([2.0, 2.0, 1.0], 0), ([2.0, 2.0, 1.0], 1)] {
            let prop = Property::classification(&x, y, 3);
            // ties count as satisfied
            let expect = x.iter().all(|&v| v <= x[y]);
            assert_eq!(net.satisfies(&x, &prop), expect);
        }
        let prop = Property::classification(&[0.1, 0.9, 0.3], 2, 3);
        assert!(!net.satisfies(&[0.1, 0.9, 0.3], &prop));
    }

    #[test]
    fn relu_net_is_affine_on_stable_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_network(&mut rng, &[3, 6, 6, 2], ActivationKind::Relu);
        let mut checked = 0;
        for _ in 0..200 {
            let x1: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x2: Vec<f64> = x1.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect();
            let pattern = |x: &[f64]| -> Vec<bool> {
                let mut a = x.to_vec();
                let mut signs = vec![];
                for l in net.layers() {
                    let z = l.pre_activation(&a);
                    signs.extend(z.iter().map(|v| *v > 0.0));
                    a = l.forward(&a);
                }
                signs
            };
            let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
            if pattern(&x1) != pattern(&x2) || pattern(&x1) != pattern(&mid) {
                continue;
            }
            let (y1, y2, ym) = (net.forward(&x1).unwrap(), net.forward(&x2).unwrap(), net.forward(&mid).unwrap());
            for j in 0..2 {
                assert!((ym[j] - (0.3 * y1[j] + 0.7 * y2[j])).abs() < 1e-12);
            }
            checked += 1;
        }
        assert!(checked > 100);
    }
}

//! Dense feed-forward networks with hand-written backpropagation.
//!
//! A network is described by `layer_sizes = [input, h1, ..., output]` and one
//! activation per layer (so `activations.len() == layer_sizes.len() - 1`).
//!
//! Parameters live in one flat vector with a fixed ordering so checkpoints are
//! portable: for each layer in order, the weight matrix is stored row-major as
//! `out x in` (row `o` holds the weights feeding output unit `o`), followed by
//! the `out` biases of that layer.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Linear,
    /// Output-layer only.
    Exponential,
    /// Output-layer only.
    Softmax,
}

impl Activation {
    pub const ALL: [Activation; 6] = [
        Activation::Tanh,
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Linear,
        Activation::Exponential,
        Activation::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
            Activation::Exponential => "exponential",
            Activation::Softmax => "softmax",
        }
    }

    pub fn output_only(self) -> bool {
        matches!(self, Activation::Exponential | Activation::Softmax)
    }

    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::Linear => z.to_vec(),
            Activation::Exponential => z.iter().map(|v| v.exp()).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Maps `dL/da` to `dL/dz` given the pre-activation `z` and output `a`.
    fn backprop(self, z: &[f64], a: &[f64], grad: &[f64]) -> Vec<f64> {
        match self {
            Activation::Tanh => grad.iter().zip(a).map(|(g, a)| g * (1.0 - a * a)).collect(),
            Activation::Relu => grad
                .iter()
                .zip(z)
                .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Sigmoid => grad.iter().zip(a).map(|(g, a)| g * a * (1.0 - a)).collect(),
            Activation::Linear => grad.to_vec(),
            Activation::Exponential => grad.iter().zip(a).map(|(g, a)| g * a).collect(),
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(a).map(|(g, a)| g * a).sum();
                grad.iter().zip(a).map(|(g, a)| a * (g - dot)).collect()
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation `{s}`")))
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln Σ e^{v_i}`, stable for large magnitudes.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

impl DenseNet {
    pub fn new(
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
        params: Vec<f64>,
    ) -> Result<Self> {
        validate_architecture(&layer_sizes, &activations)?;
        let expected = param_count(&layer_sizes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(DenseNet {
            layer_sizes,
            activations,
            params,
        })
    }

    /// All weights and biases zero.
    pub fn zeros(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let n = param_count(&layer_sizes);
        Self::new(layer_sizes, activations, vec![0.0; n])
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    /// Deterministic under `seed`.
    pub fn init(layer_sizes: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Result<Self> {
        validate_architecture(&layer_sizes, &activations)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Self::new(layer_sizes, activations, params)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> Activation {
        *self.activations.last().unwrap()
    }

    /// Offsets of the weight block of each layer; biases follow at `w + in * out`.
    fn layers(&self) -> impl Iterator<Item = LayerView> + '_ {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .enumerate()
            .map(move |(index, w)| {
                let view = LayerView {
                    index,
                    weights: offset,
                    biases: offset + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += w[0] * w[1] + w[1];
                view
            })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward_trace(x)?;
        Ok(trace.activations.pop().unwrap())
    }

    /// Forward pass keeping every intermediate needed by [`DenseNet::backward`].
    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                expected: self.input_size(),
                got: x.len(),
            });
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite input value {bad}")));
        }
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut preacts = Vec::with_capacity(self.num_layers());
        activations.push(x.to_vec());
        for layer in self.layers() {
            let input = activations.last().unwrap();
            let mut z = self.params[layer.biases..layer.biases + layer.fan_out].to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &self.params[layer.weights + o * layer.fan_in..][..layer.fan_in];
                *zo += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
            }
            let a = self.activations[layer.index].apply(&z);
            if z.iter().chain(&a).any(|v| !v.is_finite()) {
                return Err(Error::numerical(
                    Some(layer.index),
                    "overflow in forward pass",
                ));
            }
            preacts.push(z);
            activations.push(a);
        }
        Ok(Trace {
            activations,
            preacts,
        })
    }

    /// Backpropagates `d_out_preact = dL/dz` of the final layer through the
    /// network, accumulating `dL/dθ` into `grad` and returning `dL/dx`.
    pub fn backward(&self, trace: &Trace, d_out_preact: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(d_out_preact.len(), self.output_size());
        let layers: Vec<LayerView> = self.layers().collect();
        let mut delta = d_out_preact.to_vec();
        for layer in layers.iter().rev() {
            let input = &trace.activations[layer.index];
            let mut d_input = vec![0.0; layer.fan_in];
            for (o, &d) in delta.iter().enumerate() {
                let w_row = layer.weights + o * layer.fan_in;
                for i in 0..layer.fan_in {
                    grad[w_row + i] += d * input[i];
                    d_input[i] += self.params[w_row + i] * d;
                }
                grad[layer.biases + o] += d;
            }
            if layer.index == 0 {
                return d_input;
            }
            let prev = layer.index - 1;
            delta = self.activations[prev].backprop(
                &trace.preacts[prev],
                &trace.activations[layer.index],
                &d_input,
            );
        }
        unreachable!("network has at least one layer")
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerView {
    index: usize,
    weights: usize,
    biases: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Intermediates of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    pub fn output_preactivation(&self) -> &[f64] {
        self.preacts.last().unwrap()
    }
}

/// `Σ (in·out + out)` over consecutive pairs of `layer_sizes`.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn validate_architecture(layer_sizes: &[usize], activations: &[Activation]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(
            "architecture needs an input size and at least one layer".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config("layer sizes must be positive".into()));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::Config(format!(
            "{} layers but {} activation tags",
            layer_sizes.len() - 1,
            activations.len()
        )));
    }
    if let Some(a) = activations[..activations.len() - 1]
        .iter()
        .find(|a| a.output_only())
    {
        return Err(Error::Config(format!(
            "{a} is only allowed in the final layer"
        )));
    }
    Ok(())
}

/// Gradient of a scalar loss with respect to a network's flat parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(
                None,
                format!("gradient entry {i} is not finite"),
            ));
        }
        Ok(GradientVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Activation::*;

    #[test]
    fn zero_net_sigmoid_output_is_half() {
        let net = DenseNet::zeros(vec![3, 4, 1], vec![Tanh, Sigmoid]).unwrap();
        assert_eq!(net.forward(&[0.3, -2.0, 7.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn identity_linear_layer() {
        let net =
            DenseNet::new(vec![2, 2], vec![Linear], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    /// Scalar re-implementation of the 2-20-20-1 toy classifier, written
    /// without the flat-slice helpers used by `forward`.
    fn scalar_forward(p: &[f64], x: [f64; 2]) -> f64 {
        let mut k = 0;
        let mut h1 = [0.0; 20];
        let mut w1 = [[0.0; 2]; 20];
        for row in w1.iter_mut() {
            for w in row.iter_mut() {
                *w = p[k];
                k += 1;
            }
        }
        for (j, h) in h1.iter_mut().enumerate() {
            *h = (w1[j][0] * x[0] + w1[j][1] * x[1] + p[k + j]).tanh();
        }
        k += 20;
        let mut h2 = [0.0; 20];
        for (j, h) in h2.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, hi) in h1.iter().enumerate() {
                acc += p[k + j * 20 + i] * hi;
            }
            acc += p[k + 400 + j];
            *h = if acc > 0.0 { acc } else { 0.0 };
        }
        k += 420;
        let mut out = p[k + 20];
        for (i, hi) in h2.iter().enumerate() {
            out += p[k + i] * hi;
        }
        1.0 / (1.0 + (-out).exp())
    }

    #[test]
    fn seeded_toy_net_matches_scalar_oracle() {
        let mut net = DenseNet::init(vec![2, 20, 20, 1], vec![Tanh, Relu, Sigmoid], 0).unwrap();
        // zero biases would hide bias-indexing mistakes
        for (i, p) in net.params_mut().iter_mut().enumerate() {
            *p += 0.01 * ((i % 7) as f64 - 3.0);
        }
        for x in [[0.0, 0.0], [0.7, -1.3], [-2.0, 3.5]] {
            let got = net.forward(&x).unwrap()[0];
            let want = scalar_forward(net.params(), x);
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = DenseNet::zeros(vec![2, 1], vec![Sigmoid]).unwrap();
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn overflow_reports_layer() {
        let net = DenseNet::new(
            vec![1, 1, 1],
            vec![Linear, Exponential],
            vec![1e3, 0.0, 1.0, 0.0],
        )
        .unwrap();
        match net.forward(&[1.0]) {
            Err(Error::Numerical { layer, .. }) => assert_eq!(layer, Some(1)),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_biases_and_glorot_bound() {
        let sizes = vec![20, 20, 1];
        let acts = vec![Relu, Sigmoid];
        let a = DenseNet::init(sizes.clone(), acts.clone(), 42).unwrap();
        let b = DenseNet::init(sizes, acts, 42).unwrap();
        let bits = |n: &DenseNet| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));

        let bound = (6.0f64 / 40.0).sqrt();
        assert!(a.params()[..400].iter().all(|w| w.abs() <= bound));
        assert!(a.params()[400..420].iter().all(|&b| b == 0.0));
        assert!(a.params()[440..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn architecture_validation() {
        assert!(DenseNet::init(vec![3], vec![], 0).is_err());
        assert!(DenseNet::init(vec![3, 2], vec![Tanh, Tanh], 0).is_err());
        assert!(DenseNet::init(vec![3, 4, 2], vec![Softmax, Linear], 0).is_err());
        assert!(DenseNet::init(vec![3, 0, 2], vec![Tanh, Linear], 0).is_err());
        assert!(DenseNet::new(vec![2, 1], vec![Linear], vec![0.0; 2]).is_err());
        assert_eq!(
            param_count(&[2, 20, 20, 1]),
            2 * 20 + 20 + 20 * 20 + 20 + 20 + 1
        );
    }

    #[test]
    fn softmax_is_a_probability_vector() {
        let p = softmax(&[1000.0, -1000.0, 3.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn activation_names_round_trip() {
        for a in Activation::ALL {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!("gelu".parse::<Activation>().is_err());
    }
}

//! Adversary heads modelling `p(z | s)` from the classifier score `s`.
//!
//! Continuous nuisances use a Gaussian mixture density head. The adversary
//! network's final layer is linear with `3C` raw outputs laid out as
//! `[means (C) | log-stddevs (C) | weight logits (C)]`; the head applies the
//! exponential to the stddev slots and a softmax to the weight slots.
//! Categorical nuisances use a network whose final layer is a softmax.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, softmax, Activation, DenseNet, GradientVector};

/// Lower bound applied to every mixture standard deviation.
pub const STDDEV_FLOOR: f64 = 1e-3;
/// Probabilities are floored here before taking a log.
pub const PROB_FLOOR: f64 = 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AdversaryKind {
    Mixture { components: usize },
    Categorical { classes: usize },
}

impl AdversaryKind {
    pub fn output_width(self) -> usize {
        match self {
            AdversaryKind::Mixture { components } => 3 * components,
            AdversaryKind::Categorical { classes } => classes,
        }
    }

    pub fn output_activation(self) -> Activation {
        match self {
            AdversaryKind::Mixture { .. } => Activation::Linear,
            AdversaryKind::Categorical { .. } => Activation::Softmax,
        }
    }

    /// Checks that `net` takes a single score and ends in this head's layout.
    pub fn check(self, net: &DenseNet) -> Result<()> {
        if net.input_size() != 1 {
            return Err(Error::Config(format!(
                "adversary must take the 1D score as input, got width {}",
                net.input_size()
            )));
        }
        if net.output_size() != self.output_width()
            || net.output_activation() != self.output_activation()
        {
            return Err(Error::Config(format!(
                "adversary head {self} needs a final {} layer of width {}, got {} of width {}",
                self.output_activation(),
                self.output_width(),
                net.output_activation(),
                net.output_size()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryKind::Mixture { components } => write!(f, "mixture:{components}"),
            AdversaryKind::Categorical { classes } => write!(f, "categorical:{classes}"),
        }
    }
}

impl FromStr for AdversaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "adversary kind `{s}` is not `mixture:C` or `categorical:N`"
            ))
        };
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        match kind.trim() {
            "mixture" => Ok(AdversaryKind::Mixture { components: n }),
            "categorical" if n >= 2 => Ok(AdversaryKind::Categorical { classes: n }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixtureParams {
    pub fn new(means: Vec<f64>, stddevs: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let c = means.len();
        if c == 0 || stddevs.len() != c || weights.len() != c {
            return Err(Error::InvalidInput(
                "mixture component vectors must share a non-zero length".into(),
            ));
        }
        if means
            .iter()
            .chain(&stddevs)
            .chain(&weights)
            .any(|v| !v.is_finite())
        {
            return Err(Error::numerical(None, "non-finite mixture parameter"));
        }
        if stddevs.iter().any(|&s| s < STDDEV_FLOOR) {
            return Err(Error::InvalidInput(format!(
                "stddev below floor {STDDEV_FLOOR}"
            )));
        }
        if weights.iter().any(|&w| w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(
                "mixture weights must form a probability vector".into(),
            ));
        }
        Ok(MixtureParams {
            means,
            stddevs,
            weights,
        })
    }

    /// Builds parameters from the raw `[μ | ρ | ω]` outputs of a mixture head.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() || raw.len() % 3 != 0 {
            return Err(Error::Config(format!(
                "mixture head width {} is not 3C",
                raw.len()
            )));
        }
        let c = raw.len() / 3;
        let means = raw[..c].to_vec();
        let stddevs = raw[c..2 * c]
            .iter()
            .map(|r| r.exp().max(STDDEV_FLOOR))
            .collect();
        let weights = softmax(&raw[2 * c..]);
        Self::new(means, stddevs, weights)
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn density(&self, z: f64) -> f64 {
        self.means
            .iter()
            .zip(&self.stddevs)
            .zip(&self.weights)
            .map(|((m, s), w)| {
                let u = (z - m) / s;
                w * (-0.5 * u * u).exp() / (s * (2.0 * PI).sqrt())
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalParams {
    pub probs: Vec<f64>,
}

impl CategoricalParams {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty()
            || probs.iter().any(|p| !(0.0..=1.0).contains(p))
            || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidInput(
                "categorical probabilities must form a probability vector".into(),
            ));
        }
        Ok(CategoricalParams { probs })
    }
}

/// Evaluates a mixture adversary at score `s`.
pub fn mdn_head(net: &DenseNet, s: f64) -> Result<MixtureParams> {
    if net.output_activation() != Activation::Linear || net.output_size() % 3 != 0 {
        return Err(Error::Config(format!(
            "mixture head needs a linear final layer of width 3C, got {} of width {}",
            net.output_activation(),
            net.output_size()
        )));
    }
    MixtureParams::from_raw(&net.forward(&[s])?)
}

pub fn categorical_head(net: &DenseNet, s: f64) -> Result<CategoricalParams> {
    if net.output_activation() != Activation::Softmax {
        return Err(Error::Config(
            "categorical head needs a softmax final layer".into(),
        ));
    }
    CategoricalParams::new(net.forward(&[s])?)
}

/// `-ln Σ_c w_c N(z; μ_c, σ_c)`, via log-sum-exp.
pub fn mdn_nll(params: &MixtureParams, z: f64) -> f64 {
    let terms: Vec<f64> = params
        .means
        .iter()
        .zip(&params.stddevs)
        .zip(&params.weights)
        .map(|((m, s), w)| {
            let u = (z - m) / s;
            w.ln() - s.ln() - HALF_LN_2PI - 0.5 * u * u
        })
        .collect();
    -log_sum_exp(&terms)
}

/// Mixture NLL from raw head outputs together with `d nll / d raw`.
pub(crate) fn mdn_nll_raw(raw: &[f64], z: f64) -> (f64, Vec<f64>) {
    let c = raw.len() / 3;
    let (mu, rho, omega) = (&raw[..c], &raw[c..2 * c], &raw[2 * c..]);
    let lse_omega = log_sum_exp(omega);
    let mut sigma = Vec::with_capacity(c);
    let mut u = Vec::with_capacity(c);
    let mut terms = Vec::with_capacity(c);
    for k in 0..c {
        let s = rho[k].exp().max(STDDEV_FLOOR);
        let uk = (z - mu[k]) / s;
        terms.push(omega[k] - lse_omega - s.ln() - HALF_LN_2PI - 0.5 * uk * uk);
        sigma.push(s);
        u.push(uk);
    }
    let total = log_sum_exp(&terms);
    let mut grad = vec![0.0; 3 * c];
    for k in 0..c {
        let resp = (terms[k] - total).exp();
        let weight = (omega[k] - lse_omega).exp();
        grad[k] = -resp * u[k] / sigma[k];
        if rho[k].exp() > STDDEV_FLOOR {
            grad[c + k] = -resp * (u[k] * u[k] - 1.0);
        }
        grad[2 * c + k] = weight - resp;
    }
    (-total, grad)
}

/// `-ln max(p[index], PROB_FLOOR)`.
pub fn cat_nll(params: &CategoricalParams, index: usize) -> Result<f64> {
    let p = params.probs.get(index).ok_or_else(|| {
        Error::InvalidInput(format!(
            "category {index} out of range for {} classes",
            params.probs.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Categorical NLL of softmax outputs `probs`, with `d nll / d logits`.
pub(crate) fn cat_nll_softmax(probs: &[f64], index: usize) -> (f64, Vec<f64>) {
    let p = probs[index];
    if p < PROB_FLOOR {
        return (-PROB_FLOOR.ln(), vec![0.0; probs.len()]);
    }
    let mut grad = probs.to_vec();
    grad[index] -= 1.0;
    (-p.ln(), grad)
}

/// Converts a stored nuisance value to a category index.
pub fn category_index(z: f64, classes: usize) -> Result<usize> {
    if z.fract() != 0.0 || z < 0.0 || z >= classes as f64 {
        return Err(Error::InvalidInput(format!(
            "nuisance value {z} is not a category in 0..{classes}"
        )));
    }
    Ok(z as usize)
}

/// Mean adversary NLL over a batch of scores, with its gradient with respect
/// to the adversary parameters and with respect to each input score.
#[derive(Clone, Debug)]
pub struct AdversaryLoss {
    pub loss: f64,
    pub param_grad: GradientVector,
    pub score_grad: Vec<f64>,
}

pub fn adversary_loss(
    r_net: &DenseNet,
    scores: &[f64],
    zs: &[f64],
    kind: AdversaryKind,
) -> Result<AdversaryLoss> {
    if scores.len() != zs.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: zs.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("empty adversary batch".into()));
    }
    kind.check(r_net)?;
    let n = scores.len() as f64;
    let mut grad = vec![0.0; r_net.params().len()];
    let mut score_grad = Vec::with_capacity(scores.len());
    let mut total = 0.0;
    for (&s, &z) in scores.iter().zip(zs) {
        let trace = r_net.forward_trace(&[s])?;
        let (loss, mut d_out) = match kind {
            AdversaryKind::Mixture { .. } => mdn_nll_raw(trace.output_preactivation(), z),
            AdversaryKind::Categorical { classes } => {
                cat_nll_softmax(trace.output(), category_index(z, classes)?)
            }
        };
        d_out.iter_mut().for_each(|d| *d /= n);
        total += loss;
        let d_in = r_net.backward(&trace, &d_out, &mut grad);
        score_grad.push(d_in[0]);
    }
    let loss = total / n;
    if !loss.is_finite() || score_grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical(None, "adversary loss overflow"));
    }
    Ok(AdversaryLoss {
        loss,
        param_grad: GradientVector::new(grad)?,
        score_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn zero_mixture_net_is_uniform_standard() {
        let net = DenseNet::zeros(vec![1, 20, 20, 15], vec![Relu, Relu, Linear]).unwrap();
        let p = mdn_head(&net, 0.42).unwrap();
        assert_eq!(p.means, vec![0.0; 5]);
        assert_eq!(p.stddevs, vec![1.0; 5]);
        assert!(p.weights.iter().all(|&w| close(w, 0.2, 1e-15)));
    }

    #[test]
    fn single_component_from_raw() {
        let p = MixtureParams::from_raw(&[2.0, 0.0, -7.3]).unwrap();
        assert_eq!((p.means[0], p.stddevs[0], p.weights[0]), (2.0, 1.0, 1.0));
    }

    #[test]
    fn stddev_is_floored() {
        let p = MixtureParams::from_raw(&[0.0, -20.0, 0.0]).unwrap();
        assert_eq!(p.stddevs[0], STDDEV_FLOOR);
    }

    #[test]
    fn mdn_head_rejects_wrong_layout() {
        let net = DenseNet::zeros(vec![1, 4, 14], vec![Relu, Linear]).unwrap();
        assert!(matches!(mdn_head(&net, 0.0), Err(Error::Config(_))));
        let net = DenseNet::zeros(vec![1, 4, 15], vec![Relu, Softmax]).unwrap();
        assert!(matches!(mdn_head(&net, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn standard_normal_at_mean() {
        let p = MixtureParams::new(vec![0.3], vec![1.0], vec![1.0]).unwrap();
        assert!(close(mdn_nll(&p, 0.3), 0.9189, 1e-4));
    }

    #[test]
    fn identical_components_collapse() {
        let one = MixtureParams::new(vec![0.5], vec![2.0], vec![1.0]).unwrap();
        let two = MixtureParams::new(vec![0.5, 0.5], vec![2.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert!(close(mdn_nll(&one, -1.2), mdn_nll(&two, -1.2), 1e-14));
    }

    #[test]
    fn matches_naive_density_sum() {
        let p = MixtureParams::new(
            vec![-1.0, 0.2, 0.9, 2.5, -0.4],
            vec![0.5, 1.3, 0.8, 2.0, 0.3],
            vec![0.1, 0.3, 0.2, 0.15, 0.25],
        )
        .unwrap();
        let naive: f64 = (0..5)
            .map(|c| {
                let u = (0.3 - p.means[c]) / p.stddevs[c];
                p.weights[c] * (-0.5 * u * u).exp() / (p.stddevs[c] * (2.0 * PI).sqrt())
            })
            .sum();
        assert!(close(mdn_nll(&p, 0.3), -naive.ln(), 1e-10));
        assert!(close(p.density(0.3), naive, 1e-15));
    }

    #[test]
    fn raw_loss_agrees_with_params_loss() {
        let raw = [0.1, -0.7, 0.3, -0.2, 1.1, 0.4];
        let (raw_loss, _) = mdn_nll_raw(&raw, 0.25);
        let p = MixtureParams::from_raw(&raw).unwrap();
        assert!(close(raw_loss, mdn_nll(&p, 0.25), 1e-13));
    }

    #[test]
    fn categorical_values() {
        let uniform = CategoricalParams::new(vec![0.5, 0.5]).unwrap();
        assert!(close(
            cat_nll(&uniform, 0).unwrap(),
            std::f64::consts::LN_2,
            1e-4
        ));
        assert!(close(
            cat_nll(&uniform, 1).unwrap(),
            std::f64::consts::LN_2,
            1e-4
        ));
        let certain = CategoricalParams::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(cat_nll(&certain, 0).unwrap(), 0.0);
        assert!(close(
            cat_nll(&certain, 1).unwrap(),
            -PROB_FLOOR.ln(),
            1e-12
        ));
        let skewed = CategoricalParams::new(vec![0.9, 0.1]).unwrap();
        assert!(close(
            cat_nll(&skewed, 1).unwrap(),
            std::f64::consts::LN_10,
            1e-4
        ));
        assert!(matches!(cat_nll(&skewed, 2), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn uniform_categorical_batch_of_one() {
        let net = DenseNet::zeros(vec![1, 3, 4], vec![Tanh, Softmax]).unwrap();
        let out = adversary_loss(
            &net,
            &[0.7],
            &[2.0],
            AdversaryKind::Categorical { classes: 4 },
        )
        .unwrap();
        assert!(close(out.loss, 4f64.ln(), 1e-15));
    }

    #[test]
    fn adversary_loss_validates_inputs() {
        let kind = AdversaryKind::Mixture { components: 2 };
        let net = DenseNet::zeros(vec![1, 3, 6], vec![Tanh, Linear]).unwrap();
        assert!(adversary_loss(&net, &[], &[], kind).is_err());
        assert!(adversary_loss(&net, &[0.1], &[0.1, 0.2], kind).is_err());
        let cat = AdversaryKind::Categorical { classes: 2 };
        let net = DenseNet::zeros(vec![1, 3, 2], vec![Tanh, Softmax]).unwrap();
        assert!(adversary_loss(&net, &[0.1], &[0.5], cat).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(
            "mixture:5".parse::<AdversaryKind>().unwrap(),
            AdversaryKind::Mixture { components: 5 }
        );
        assert_eq!(
            "categorical:2".parse::<AdversaryKind>().unwrap(),
            AdversaryKind::Categorical { classes: 2 }
        );
        for bad in ["mixture", "mixture:0", "categorical:1", "gauss:3"] {
            assert!(bad.parse::<AdversaryKind>().is_err(), "{bad}");
        }
    }
}

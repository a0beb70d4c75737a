//! Batch losses over a [`DenseNet`] and their exact parameter gradients.

use crate::adversary::{cat_nll_softmax, mdn_nll_raw};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Activation, DenseNet, GradientVector, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Binary cross-entropy on a single sigmoid output, computed from the logit.
    Bce,
    /// Gaussian mixture NLL on a linear `3C`-wide head.
    MdnNll,
    /// Categorical NLL on a softmax head.
    CatNll,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Binary(u8),
    Real(f64),
    Category(usize),
}

/// Loss of one sample and `dL/dz` for the final layer's pre-activation.
pub fn output_loss(
    net: &DenseNet,
    trace: &Trace,
    target: Target,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    let activation = net.output_activation();
    match (kind, target) {
        (LossKind::Bce, Target::Binary(y)) => {
            if activation != Activation::Sigmoid || net.output_size() != 1 {
                return Err(Error::Config("bce needs a single sigmoid output".into()));
            }
            if y > 1 {
                return Err(Error::InvalidInput(format!("binary label {y}")));
            }
            let z = trace.output_preactivation()[0];
            let y = f64::from(y);
            Ok((softplus(z) - y * z, vec![sigmoid(z) - y]))
        }
        (LossKind::MdnNll, Target::Real(z)) => {
            if activation != Activation::Linear || net.output_size() % 3 != 0 {
                return Err(Error::Config(
                    "mixture NLL needs a linear output of width 3C".into(),
                ));
            }
            Ok(mdn_nll_raw(trace.output_preactivation(), z))
        }
        (LossKind::CatNll, Target::Category(k)) => {
            if activation != Activation::Softmax {
                return Err(Error::Config(
                    "categorical NLL needs a softmax output".into(),
                ));
            }
            if k >= net.output_size() {
                return Err(Error::InvalidInput(format!("category {k} out of range")));
            }
            Ok(cat_nll_softmax(trace.output(), k))
        }
        (kind, target) => Err(Error::InvalidInput(format!(
            "target {target:?} incompatible with {kind:?}"
        ))),
    }
}

/// Mean loss over `batch` and its gradient with respect to `net`'s params.
pub fn loss_and_grad(
    net: &DenseNet,
    batch: &[(Vec<f64>, Target)],
    kind: LossKind,
) -> Result<(f64, GradientVector)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let n = batch.len() as f64;
    let mut grad = vec![0.0; net.params().len()];
    let mut total = 0.0;
    for (x, target) in batch {
        let trace = net.forward_trace(x)?;
        let (loss, mut d_out) = output_loss(net, &trace, *target, kind)?;
        if !loss.is_finite() {
            return Err(Error::numerical(
                Some(net.num_layers() - 1),
                "non-finite loss",
            ));
        }
        d_out.iter_mut().for_each(|d| *d /= n);
        total += loss;
        net.backward(&trace, &d_out, &mut grad);
    }
    Ok((total / n, GradientVector::new(grad)?))
}

/// Mean loss only, for finite-difference checks and evaluation.
pub fn mean_loss(net: &DenseNet, batch: &[(Vec<f64>, Target)], kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for (x, target) in batch {
        let trace = net.forward_trace(x)?;
        total += output_loss(net, &trace, *target, kind)?.0;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Activation::*;

    #[test]
    fn bce_at_half_is_ln2() {
        let net = DenseNet::zeros(vec![2, 3, 1], vec![Tanh, Sigmoid]).unwrap();
        let (loss, _) =
            loss_and_grad(&net, &[(vec![1.0, -1.0], Target::Binary(1))], LossKind::Bce).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-4);
    }

    #[test]
    fn bce_perfect_confidence_is_zero() {
        // output bias pushes the sigmoid to exactly 1.0 in f64
        let mut net = DenseNet::zeros(vec![1, 1], vec![Sigmoid]).unwrap();
        net.params_mut()[1] = 60.0;
        assert_eq!(net.forward(&[0.0]).unwrap()[0], 1.0);
        let (loss, _) =
            loss_and_grad(&net, &[(vec![0.0], Target::Binary(1))], LossKind::Bce).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn incompatible_targets_rejected() {
        let net = DenseNet::zeros(vec![1, 1], vec![Sigmoid]).unwrap();
        assert!(loss_and_grad(&net, &[(vec![0.0], Target::Real(0.0))], LossKind::Bce).is_err());
        assert!(loss_and_grad(&net, &[(vec![0.0], Target::Binary(2))], LossKind::Bce).is_err());
        assert!(loss_and_grad(&net, &[(vec![0.0], Target::Real(0.0))], LossKind::MdnNll).is_err());
        assert!(loss_and_grad(&net, &[], LossKind::Bce).is_err());
    }
}

//! Compares backpropagated gradients with central finite differences.
//!
//! Checks the classifier's cross-entropy, the mixture adversary's NLL, and
//! the full minimax objective `L_f - λ L_r` that the classifier descends.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use pivotal::adversary::{adversary_loss, AdversaryKind};
use pivotal::datagen::{generate_toy, ToySpec};
use pivotal::loss::{loss_and_grad, LossKind, Target};
use pivotal::nn::{Activation::*, DenseNet};
use pivotal::train::{classifier_objective, AdversaryTerm};

const H: f64 = 1e-5;

fn max_rel_err(analytic: &[f64], params: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for (i, a) in analytic.iter().enumerate() {
        let orig = p[i];
        p[i] = orig + H;
        let up = loss(&p);
        p[i] = orig - H;
        let down = loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * H);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

fn with_params(net: &DenseNet, p: &[f64]) -> DenseNet {
    let mut n = net.clone();
    n.params_mut().copy_from_slice(p);
    n
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_toy(&ToySpec::new(32, 4))?;
    let f = DenseNet::init(vec![2, 20, 20, 1], vec![Tanh, Relu, Sigmoid], 1)?;
    let kind = AdversaryKind::Mixture { components: 5 };
    let r = DenseNet::init(vec![1, 20, 20, 15], vec![Relu, Relu, Linear], 2)?;

    let batch: Vec<(Vec<f64>, Target)> = data
        .iter()
        .map(|s| (s.x.clone(), Target::Binary(s.y)))
        .collect();
    let (_, g) = loss_and_grad(&f, &batch, LossKind::Bce)?;
    let err = max_rel_err(g.values(), f.params(), |p| {
        loss_and_grad(&with_params(&f, p), &batch, LossKind::Bce)
            .unwrap()
            .0
    });
    println!(
        "classifier bce:        {} params, max rel err {err:.2e}",
        f.params().len()
    );

    let scores: Vec<f64> = data.iter().map(|s| f.forward(&s.x).unwrap()[0]).collect();
    let zs: Vec<f64> = data.iter().map(|s| s.z).collect();
    let adv = adversary_loss(&r, &scores, &zs, kind)?;
    let err = max_rel_err(adv.param_grad.values(), r.params(), |p| {
        adversary_loss(&with_params(&r, p), &scores, &zs, kind)
            .unwrap()
            .loss
    });
    println!(
        "adversary mixture NLL: {} params, max rel err {err:.2e}",
        r.params().len()
    );

    let samples: Vec<_> = data.iter().collect();
    let term = AdversaryTerm {
        net: &r,
        kind,
        lambda: 50.0,
        label: None,
    };
    let (_, g) = classifier_objective(&f, &samples, Some(term))?;
    let err = max_rel_err(g.values(), f.params(), |p| {
        classifier_objective(&with_params(&f, p), &samples, Some(term))
            .unwrap()
            .0
    });
    println!(
        "objective L_f - 50 L_r: {} params, max rel err {err:.2e}",
        f.params().len()
    );
    Ok(())
}

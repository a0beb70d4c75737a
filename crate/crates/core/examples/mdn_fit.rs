//! Fits a mixture density network to a conditional distribution.
//!
//! The target is `z | s ~ N(4s - 2, 0.3²)` for half the points and
//! `N(2 - 4s, 0.3²)` for the other half: two crossing branches. A
//! 3-component adversary head learns both and reports the fitted mixture at
//! a few inputs.
//!
//! ```text
//! cargo run --release --example mdn_fit
//! ```

use pivotal::adversary::{mdn_head, AdversaryKind, MixtureParams};
use pivotal::nn::{Activation::*, DenseNet};
use pivotal::optim::OptimizerKind;
use pivotal::train::{adversary_nll, fit_adversary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (scores, zs): (Vec<f64>, Vec<f64>) = (0..20_000)
        .map(|_| {
            let s: f64 = rng.gen();
            let centre = if rng.gen_bool(0.5) {
                4.0 * s - 2.0
            } else {
                2.0 - 4.0 * s
            };
            (s, centre + 0.3 * rng.sample::<f64, _>(StandardNormal))
        })
        .unzip();

    let kind = AdversaryKind::Mixture { components: 3 };
    let r0 = DenseNet::init(vec![1, 32, 32, 9], vec![Tanh, Tanh, Linear], 1)?;
    println!("initial NLL {:.4}", adversary_nll(&r0, &scores, &zs, kind)?);
    let r = fit_adversary(
        &r0,
        &scores,
        &zs,
        kind,
        8000,
        128,
        OptimizerKind::Adam,
        3e-3,
        2,
    )?;
    let truth = MixtureParams::new(vec![0.0, 0.0], vec![0.3, 0.3], vec![0.5, 0.5])?;
    let true_nll = scores
        .iter()
        .zip(&zs)
        .map(|(&s, &z)| {
            let m = MixtureParams {
                means: vec![4.0 * s - 2.0, 2.0 - 4.0 * s],
                ..truth.clone()
            };
            -m.density(z).ln()
        })
        .sum::<f64>()
        / zs.len() as f64;
    println!(
        "fitted NLL  {:.4} (true density {true_nll:.4})",
        adversary_nll(&r, &scores, &zs, kind)?
    );

    for s in [0.1, 0.3, 0.7, 0.9] {
        let m = mdn_head(&r, s)?;
        let parts: Vec<String> = (0..3)
            .map(|c| {
                format!(
                    "{:.2}×N({:+.2}, {:.2})",
                    m.weights[c], m.means[c], m.stddevs[c]
                )
            })
            .collect();
        println!("s = {s}: {}", parts.join(" + "));
    }
    Ok(())
}

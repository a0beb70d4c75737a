//! Checks the lower bound `L_f - H(Z|f(X)) >= H(Y|X) - H(Z)` on the toy.
//!
//! `H(Y|X)` comes from the exact class densities with the nuisance
//! integrated out by Gauss-Hermite quadrature. The right-hand side is
//! compared with a λ = 1 run whose adversary is refitted on fresh data.
//!
//! ```text
//! cargo run --release --example entropy_bound
//! ```

use pivotal::datagen::{generate_toy, ToySpec};
use pivotal::eval::{entropy_gaussian, estimate_h_y_given_x, score_samples};
use pivotal::experiment::{self, RunConfig};
use pivotal::optim::OptimizerKind;
use pivotal::train::{adversary_nll, classifier_loss, fit_adversary};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ToySpec::new(10_000, 1);
    let h_yx = estimate_h_y_given_x(&spec, 200_000)?;
    let h_z = entropy_gaussian(spec.z_prior_sigma)?;
    println!(
        "H(Y|X) = {:.4} ± {:.4}, H(Z) = {h_z:.4}",
        h_yx.value, h_yx.std_error
    );
    println!("bound: L_f - L_r >= {:.4}\n", h_yx.value - h_z);

    let mut config = RunConfig::default();
    config.train.lambda = 1.0;
    config.train.adversary_steps = 50;
    config.train.seed = 1;
    config.train.checkpoint_every = 40;
    let result = experiment::run(&generate_toy(&spec)?, &config)?;

    let fresh = generate_toy(&ToySpec::new(40_000, 77))?;
    let (fit, eval) = fresh.split_at(20_000);
    let zs = |s: &[pivotal::datagen::Sample]| s.iter().map(|s| s.z).collect::<Vec<_>>();
    println!("iteration    L_f     L_r   L_f - L_r");
    for snap in &result.snapshots {
        let f = &snap.classifier;
        let r = fit_adversary(
            &snap.adversary,
            &score_samples(f, fit)?,
            &zs(fit),
            config.train.adversary_kind,
            500,
            128,
            OptimizerKind::Adam,
            1e-3,
            0,
        )?;
        let lf = classifier_loss(f, eval)?;
        let lr = adversary_nll(
            &r,
            &score_samples(f, eval)?,
            &zs(eval),
            config.train.adversary_kind,
        )?;
        println!(
            "{:>9} {:>7.4} {:>7.4} {:>9.4}",
            snap.iteration,
            lf,
            lr,
            lf - lr
        );
    }
    Ok(())
}

//! The accuracy/pivotality trade-off on the surrogate pileup dataset.
//!
//! Trains classifiers at λ ∈ {0, 1, 10, 500} with an adversary that only
//! sees background events, then reports the best AMS on a test set. The
//! AMS includes the background uncertainty implied by the score's
//! dependence on pileup, so a moderate λ wins and a huge λ gives up too
//! much separation.
//!
//! ```text
//! cargo run --release --example lambda_sweep [repeats] [jobs]
//! ```

use pivotal::cli::surrogate_preset;
use pivotal::datagen::{GeneratorSpec, SurrogateSpec};
use pivotal::experiment::{reference_sets, run_sweep, select_interior, summarize, SweepPlan};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let repeats: usize = args.next().map_or(Ok(5), |a| a.parse())?;
    let jobs: usize = args.next().map_or(Ok(1), |a| a.parse())?;

    let generator = GeneratorSpec::Surrogate(SurrogateSpec::default());
    let data = generator.generate()?;
    let (validation, test) = reference_sets(&generator, 200_000)?;
    let plan = SweepPlan {
        lambdas: vec![0.0, 1.0, 10.0, 500.0],
        repeats,
        jobs,
    };
    let members = run_sweep(
        &data,
        &surrogate_preset(),
        &plan,
        Some(&generator),
        &validation,
        &test,
    )?;
    for m in members.iter().filter(|m| m.outcome.is_err()) {
        eprintln!(
            "λ = {} repeat {} failed: {}",
            m.lambda,
            m.repeat,
            m.outcome.as_ref().unwrap_err()
        );
    }

    let rows = summarize(&members);
    println!(
        "{:>6}  {:>15}  {:>15}  {:>8}",
        "λ", "best AMS", "max KS (y=0)", "accuracy"
    );
    for r in &rows {
        println!(
            "{:>6}  {:>7.3} ± {:<5.3}  {:>7.3} ± {:<5.3}  {:>8.4}",
            r.lambda, r.mean_best_ams, r.std_best_ams, r.mean_max_ks, r.std_max_ks, r.mean_accuracy
        );
    }
    if let Some(best) = select_interior(&rows) {
        println!("validation picks λ = {}", best.lambda);
    }
    Ok(())
}

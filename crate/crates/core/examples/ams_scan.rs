//! Scans the approximate median significance over score thresholds.
//!
//! Trains a plain classifier on the surrogate dataset, then scans AMS with
//! and without the background uncertainty that comes from not knowing the
//! pileup conditions.
//!
//! ```text
//! cargo run --release --example ams_scan
//! ```

use pivotal::datagen::{GeneratorSpec, SurrogateSpec};
use pivotal::eval::{ams, ams_scan, threshold_grid, Systematics};
use pivotal::experiment::ModelSpec;
use pivotal::train::{pretrain_classifier, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("no selection: ams(100, 1000) = {:.4}", ams(100.0, 1000.0)?);

    let generator = GeneratorSpec::Surrogate(SurrogateSpec::default());
    let data = generator.generate()?;
    let test = generator.with_draw(200_000, 42).generate()?;
    let f0 = ModelSpec::deep(32).classifier(8, 0)?;
    let f = pretrain_classifier(&f0, &data, &TrainConfig::default())?;

    let grid = threshold_grid(20);
    let plain = ams_scan(&f, &test, &grid, Systematics::None)?;
    let spread = ams_scan(&f, &test, &grid, Systematics::NuisanceSpread)?;
    println!("\nthreshold      s        b     σ_b   AMS   AMS(σ_b)");
    for i in 0..grid.len() {
        let cell = |v: Option<f64>| v.map_or("   -  ".to_string(), |v| format!("{v:6.3}"));
        println!(
            "{:>9.2} {:>6.1} {:>8.1} {:>7.1} {} {}",
            grid[i],
            plain.signal[i],
            plain.background[i],
            spread.background_sigma[i],
            cell(plain.ams_values[i]),
            cell(spread.ams_values[i])
        );
    }
    println!(
        "best: {:.3} at t = {:.2} without, {:.3} at t = {:.2} with background uncertainty",
        plain.best_ams, plain.best_threshold, spread.best_ams, spread.best_threshold
    );
    Ok(())
}

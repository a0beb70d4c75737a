//! Synthetic datasets and the dataset file format.
//!
//! Dataset files are comma-separated text with a header
//! `x1,...,xD,y,z,weight`. Values are written with shortest round-trip
//! formatting, so a write/read cycle is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: u8,
    /// Continuous nuisance value, or the category index stored as a float.
    pub z: f64,
    pub weight: f64,
}

/// Draws samples from a generator with the nuisance held at a fixed value.
pub trait NuisanceModel {
    /// `label = None` draws labels from the generator's class prior.
    fn sample_at(&self, z: f64, n: usize, label: Option<u8>, rng: &mut ChaCha8Rng) -> Vec<Sample>;
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Two 2D Gaussian classes with equal priors. Class 1's mean moves along the
/// second axis with the nuisance: `class1_mean + (0, nuisance_coupling · z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub n: usize,
    pub z_prior_sigma: f64,
    pub seed: u64,
    pub class0_mean: [f64; 2],
    pub class0_cov: [[f64; 2]; 2],
    pub class1_mean: [f64; 2],
    pub class1_cov: [[f64; 2]; 2],
    pub nuisance_coupling: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n: 10_000,
            z_prior_sigma: 1.0,
            seed: 0,
            class0_mean: [0.0, 0.0],
            class0_cov: [[1.0, -0.5], [-0.5, 1.0]],
            class1_mean: [1.0, 1.0],
            class1_cov: [[1.0, 0.0], [0.0, 1.0]],
            nuisance_coupling: 1.0,
        }
    }
}

impl ToySpec {
    pub fn new(n: usize, seed: u64) -> Self {
        ToySpec {
            n,
            seed,
            ..Default::default()
        }
    }

    /// The same classes with `Z` decoupled from `X`.
    pub fn independent_nuisance(n: usize, seed: u64) -> Self {
        ToySpec {
            nuisance_coupling: 0.0,
            ..Self::new(n, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("toy sample count must be at least 1".into()));
        }
        if !(self.z_prior_sigma > 0.0) {
            return Err(Error::Config("z prior sigma must be positive".into()));
        }
        cholesky(self.class0_cov)?;
        cholesky(self.class1_cov)?;
        Ok(())
    }

    pub fn class_mean(&self, y: u8, z: f64) -> [f64; 2] {
        if y == 0 {
            self.class0_mean
        } else {
            [
                self.class1_mean[0],
                self.class1_mean[1] + self.nuisance_coupling * z,
            ]
        }
    }

    pub fn class_cov(&self, y: u8) -> [[f64; 2]; 2] {
        if y == 0 {
            self.class0_cov
        } else {
            self.class1_cov
        }
    }

    fn draw(&self, y: u8, z: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let l = cholesky(self.class_cov(y)).expect("validated covariance");
        let mean = self.class_mean(y, z);
        let (e0, e1) = (normal(rng), normal(rng));
        vec![
            mean[0] + l[0][0] * e0,
            mean[1] + l[1][0] * e0 + l[1][1] * e1,
        ]
    }
}

impl NuisanceModel for ToySpec {
    fn sample_at(&self, z: f64, n: usize, label: Option<u8>, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let y = label.unwrap_or_else(|| u8::from(rng.gen_bool(0.5)));
                let x = self.draw(y, z, rng);
                Sample {
                    x,
                    y,
                    z,
                    weight: 1.0,
                }
            })
            .collect()
    }
}

/// Lower-triangular factor of a 2x2 covariance.
pub(crate) fn cholesky(cov: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[a, b], [c, d]] = cov;
    if a <= 0.0 || (b - c).abs() > 1e-12 || a * d - b * c <= 0.0 {
        return Err(Error::Config(format!(
            "covariance {cov:?} is not symmetric positive definite"
        )));
    }
    let l00 = a.sqrt();
    let l10 = b / l00;
    Ok([[l00, 0.0], [l10, (d - l10 * l10).sqrt()]])
}

/// Labels are fair coins and every sample draws `z ~ N(0, σ²)`, including
/// class-0 samples whose features ignore it.
pub fn generate_toy(spec: &ToySpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    Ok((0..spec.n)
        .map(|_| {
            let y = u8::from(rng.gen_bool(0.5));
            let z = spec.z_prior_sigma * normal(&mut rng);
            let x = spec.draw(y, z, &mut rng);
            Sample {
                x,
                y,
                z,
                weight: 1.0,
            }
        })
        .collect())
}

pub const SURROGATE_DIM: usize = 8;
/// Features `PILEUP_FEATURES` receive the pileup shift and noise.
pub const PILEUP_FEATURES: std::ops::Range<usize> = 4..8;

/// Stand-in for a jet-tagging dataset with a binary pileup nuisance.
///
/// Background features are standard normal; signal shifts the first four
/// features by `robust_signal_shift` and the last four by
/// `sensitive_signal_shift`. Events with
/// pileup (`z = 1`) get `pileup_shift + pileup_noise · N(0, 1)` added to each
/// of the last four features in both classes. Sample weights are normalised so
/// that signal sums to `s_total` and background to `b_total`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub n: usize,
    pub signal_fraction: f64,
    pub pileup_shift: f64,
    pub pileup_noise: f64,
    pub robust_signal_shift: f64,
    pub sensitive_signal_shift: f64,
    pub s_total: f64,
    pub b_total: f64,
    pub seed: u64,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        SurrogateSpec {
            n: 20_000,
            signal_fraction: 0.5,
            pileup_shift: 0.5,
            pileup_noise: 0.5,
            robust_signal_shift: 0.35,
            sensitive_signal_shift: 1.0,
            s_total: 100.0,
            b_total: 1000.0,
            seed: 0,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config(
                "surrogate sample count must be at least 1".into(),
            ));
        }
        if !(self.signal_fraction > 0.0 && self.signal_fraction < 1.0) {
            return Err(Error::Config("signal fraction must be in (0, 1)".into()));
        }
        if !(self.s_total > 0.0 && self.b_total > 0.0) {
            return Err(Error::Config("s_total and b_total must be positive".into()));
        }
        if self.pileup_noise < 0.0 || !self.pileup_noise.is_finite() {
            return Err(Error::Config("pileup noise must be non-negative".into()));
        }
        if ![
            self.pileup_shift,
            self.robust_signal_shift,
            self.sensitive_signal_shift,
        ]
        .iter()
        .all(|v| v.is_finite())
        {
            return Err(Error::Config("surrogate shifts must be finite".into()));
        }
        Ok(())
    }

    fn draw(&self, y: u8, z: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..SURROGATE_DIM)
            .map(|i| {
                let mut v = normal(rng);
                if y == 1 {
                    v += if PILEUP_FEATURES.contains(&i) {
                        self.sensitive_signal_shift
                    } else {
                        self.robust_signal_shift
                    };
                }
                if z == 1.0 && PILEUP_FEATURES.contains(&i) {
                    v += self.pileup_shift + self.pileup_noise * normal(rng);
                }
                v
            })
            .collect()
    }
}

impl NuisanceModel for SurrogateSpec {
    fn sample_at(&self, z: f64, n: usize, label: Option<u8>, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let y = label.unwrap_or_else(|| u8::from(rng.gen_bool(self.signal_fraction)));
                let x = self.draw(y, z, rng);
                Sample {
                    x,
                    y,
                    z,
                    weight: 1.0,
                }
            })
            .collect()
    }
}

pub fn generate_surrogate_physics(spec: &SurrogateSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples: Vec<Sample> = (0..spec.n)
        .map(|_| {
            let y = u8::from(rng.gen_bool(spec.signal_fraction));
            let z = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let x = spec.draw(y, z, &mut rng);
            Sample {
                x,
                y,
                z,
                weight: 1.0,
            }
        })
        .collect();
    normalize_weights(&mut samples, spec.s_total, spec.b_total);
    Ok(samples)
}

/// Rescales weights so class-1 sums to `s_total` and class-0 to `b_total`.
pub fn normalize_weights(samples: &mut [Sample], s_total: f64, b_total: f64) {
    for (label, total) in [(1u8, s_total), (0u8, b_total)] {
        let count = samples.iter().filter(|s| s.y == label).count();
        if count == 0 {
            continue;
        }
        let w = total / count as f64;
        samples
            .iter_mut()
            .filter(|s| s.y == label)
            .for_each(|s| s.weight = w);
    }
}

/// A dataset generator that can be stored in a manifest and rerun.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Toy(ToySpec),
    Surrogate(SurrogateSpec),
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Vec<Sample>> {
        match self {
            GeneratorSpec::Toy(spec) => generate_toy(spec),
            GeneratorSpec::Surrogate(spec) => generate_surrogate_physics(spec),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            GeneratorSpec::Toy(spec) => spec.seed,
            GeneratorSpec::Surrogate(spec) => spec.seed,
        }
    }

    /// The same generator with a different size and seed.
    pub fn with_draw(&self, n: usize, seed: u64) -> Self {
        match self {
            GeneratorSpec::Toy(spec) => GeneratorSpec::Toy(ToySpec {
                n,
                seed,
                ..spec.clone()
            }),
            GeneratorSpec::Surrogate(spec) => GeneratorSpec::Surrogate(SurrogateSpec {
                n,
                seed,
                ..spec.clone()
            }),
        }
    }

    /// Nuisance values at which pivotality is checked: `{-σ, 0, σ}` for the
    /// toy, both pileup states for the surrogate.
    pub fn z_grid(&self) -> Vec<f64> {
        match self {
            GeneratorSpec::Toy(spec) => vec![-spec.z_prior_sigma, 0.0, spec.z_prior_sigma],
            GeneratorSpec::Surrogate(_) => vec![0.0, 1.0],
        }
    }

    /// Differential (toy) or discrete (surrogate) entropy of the nuisance prior.
    pub fn nuisance_entropy(&self) -> f64 {
        match self {
            GeneratorSpec::Toy(spec) => (spec.z_prior_sigma
                * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt())
            .ln(),
            GeneratorSpec::Surrogate(_) => std::f64::consts::LN_2,
        }
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, GeneratorSpec::Surrogate(_))
    }
}

impl NuisanceModel for GeneratorSpec {
    fn sample_at(&self, z: f64, n: usize, label: Option<u8>, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        match self {
            GeneratorSpec::Toy(spec) => spec.sample_at(z, n, label, rng),
            GeneratorSpec::Surrogate(spec) => spec.sample_at(z, n, label, rng),
        }
    }
}

pub fn write_dataset(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dim = samples.first().map_or(0, |s| s.x.len());
    if samples.iter().any(|s| s.x.len() != dim) {
        return Err(Error::Schema(
            "samples have differing feature dimensions".into(),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.extend(["y", "z", "weight"].map(String::from));
    out.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let mut row: Vec<String> = s.x.iter().map(|v| format!("{v:?}")).collect();
        row.push(s.y.to_string());
        row.push(format!("{:?}", s.z));
        row.push(format!("{:?}", s.weight));
        out.write_record(&row).map_err(csv_err)?;
    }
    let mut inner = out
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(file)
}

pub fn parse_dataset(reader: impl std::io::Read) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let dim = cols.len().saturating_sub(3);
    let expected_x = (1..=dim).map(|i| format!("x{i}"));
    if cols.len() < 4
        || cols[dim..] != ["y", "z", "weight"]
        || !expected_x.eq(cols[..dim].iter().map(|c| c.to_string()))
    {
        return Err(Error::Schema(format!(
            "header must be x1..xD,y,z,weight with D >= 1, got `{}`",
            cols.join(",")
        )));
    }

    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let row = row + 1;
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            detail: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != dim + 3 {
            return Err(Error::Schema(format!(
                "row {row} (line {line}) has {} columns, expected {}",
                record.len(),
                dim + 3
            )));
        }
        let num = |i: usize| -> Result<f64> {
            record[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                detail: format!("column {}: {e}", cols[i]),
            })
        };
        let x = (0..dim).map(num).collect::<Result<Vec<_>>>()?;
        let y = match record[dim].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Schema(format!(
                    "row {row} (line {line}): label y={other} is not 0 or 1"
                )))
            }
        };
        let z = num(dim + 1)?;
        let weight = num(dim + 2)?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::Schema(format!(
                "row {row} (line {line}): weight must be positive"
            )));
        }
        if x.iter().chain([&z]).any(|v| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "row {row} (line {line}): non-finite value"
            )));
        }
        samples.push(Sample { x, y, z, weight });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / (a.len() - 1) as f64
    }

    #[test]
    fn toy_moments_over_a_million_draws() {
        let data = generate_toy(&ToySpec::new(1_000_000, 11)).unwrap();
        let c0: Vec<&Sample> = data.iter().filter(|s| s.y == 0).collect();
        let c1: Vec<&Sample> = data.iter().filter(|s| s.y == 1).collect();
        let col = |set: &[&Sample], i: usize| set.iter().map(|s| s.x[i]).collect::<Vec<_>>();

        let (a, b) = (col(&c0, 0), col(&c0, 1));
        assert!((cov(&a, &a) - 1.0).abs() < 0.01);
        assert!((cov(&b, &b) - 1.0).abs() < 0.01);
        assert!((cov(&a, &b) + 0.5).abs() < 0.01);

        let (a, b) = (col(&c1, 0), col(&c1, 1));
        assert!((mean(&a) - 1.0).abs() < 0.01);
        assert!((mean(&b) - 1.0).abs() < 0.01);
        let z: Vec<f64> = c1.iter().map(|s| s.z).collect();
        let corr = cov(&z, &b) / (cov(&z, &z) * cov(&b, &b)).sqrt();
        assert!((corr - 0.5f64.sqrt()).abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn toy_prior_and_nuisance_moments() {
        let n = 40_000;
        let data = generate_toy(&ToySpec::new(n, 5)).unwrap();
        let frac = data.iter().filter(|s| s.y == 1).count() as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 3.0 * (0.25 / n as f64).sqrt());
        let z: Vec<f64> = data.iter().map(|s| s.z).collect();
        assert!(mean(&z).abs() <= 3.0 / (n as f64).sqrt());
        assert!((cov(&z, &z) - 1.0).abs() < 0.03);
    }

    #[test]
    fn toy_is_deterministic_and_rejects_zero_n() {
        assert_eq!(
            generate_toy(&ToySpec::new(50, 9)).unwrap(),
            generate_toy(&ToySpec::new(50, 9)).unwrap()
        );
        assert_ne!(
            generate_toy(&ToySpec::new(50, 9)).unwrap(),
            generate_toy(&ToySpec::new(50, 10)).unwrap()
        );
        assert!(generate_toy(&ToySpec::new(0, 1)).is_err());
    }

    #[test]
    fn surrogate_weights_match_totals() {
        let spec = SurrogateSpec {
            n: 3001,
            signal_fraction: 0.3,
            ..Default::default()
        };
        let data = generate_surrogate_physics(&spec).unwrap();
        let sum = |y: u8| {
            data.iter()
                .filter(|s| s.y == y)
                .map(|s| s.weight)
                .sum::<f64>()
        };
        assert!((sum(1) - 100.0).abs() < 1e-9);
        assert!((sum(0) - 1000.0).abs() < 1e-9);
        assert!(data
            .iter()
            .all(|s| s.x.len() == SURROGATE_DIM && (s.z == 0.0 || s.z == 1.0)));
    }

    #[test]
    fn pileup_shifts_sensitive_features_only() {
        let spec = SurrogateSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean = spec.sample_at(0.0, 20_000, Some(0), &mut rng);
        let piled = spec.sample_at(1.0, 20_000, Some(0), &mut rng);
        let col = |set: &[Sample], i: usize| mean(&set.iter().map(|s| s.x[i]).collect::<Vec<_>>());
        for i in 0..SURROGATE_DIM {
            let shift = col(&piled, i) - col(&clean, i);
            let expected = if PILEUP_FEATURES.contains(&i) {
                0.5
            } else {
                0.0
            };
            assert!((shift - expected).abs() < 0.05, "feature {i}: {shift}");
        }
    }

    #[test]
    fn header_only_file_is_empty() {
        let data = parse_dataset("x1,x2,y,z,weight\n".as_bytes()).unwrap();
        assert!(data.is_empty());
    }

    #[test]
    fn bad_label_names_the_row() {
        let text = "x1,y,z,weight\n0.5,1,0.1,1\n0.5,2,0.1,1\n";
        match parse_dataset(text.as_bytes()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_rows_and_headers() {
        assert!(matches!(
            parse_dataset("x1,y,z\n0.5,1,0.1\n".as_bytes()),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            parse_dataset("x1,y,z,weight\n0.5,1,abc,1\n".as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_dataset("x1,y,z,weight\n0.5,1,0.1,0\n".as_bytes()),
            Err(Error::Schema(_))
        ));
    }
}

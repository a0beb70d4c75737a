//! Measurements on trained classifiers: conditional score densities and
//! their KS divergence, entropy references for the toy problem, and the
//! approximate median significance (AMS) threshold scan.

use std::f64::consts::{E, PI};
use std::num::NonZeroUsize;

use gauss_quad::hermite::GaussHermite;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{generate_toy, NuisanceModel, Sample, ToySpec};
use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, DenseNet};

pub const DENSITY_BINS: usize = 50;
pub const MIN_DENSITY_SAMPLES: usize = 1000;
/// Quadrature order used to marginalise the toy nuisance.
pub const HERMITE_ORDER: usize = 64;
/// Standard error above which an H(Y|X) estimate carries a warning.
pub const HYX_TARGET_STD_ERROR: f64 = 0.01;

/// Histogram of classifier scores over `[0, 1]` at one nuisance value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDensity {
    pub z_value: f64,
    pub bin_edges: Vec<f64>,
    pub bin_masses: Vec<f64>,
}

impl ConditionalDensity {
    /// Bins scores into 50 equal-width bins; a score of exactly 1 falls in the last bin.
    pub fn from_scores(z_value: f64, scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Evaluation("no scores to bin".into()));
        }
        let mut counts = vec![0usize; DENSITY_BINS];
        for &s in scores {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Evaluation(format!("score {s} outside [0, 1]")));
            }
            counts[((s * DENSITY_BINS as f64) as usize).min(DENSITY_BINS - 1)] += 1;
        }
        let n = scores.len() as f64;
        Ok(ConditionalDensity {
            z_value,
            bin_edges: uniform_edges(),
            bin_masses: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn from_masses(z_value: f64, bin_masses: Vec<f64>) -> Result<Self> {
        if bin_masses.len() != DENSITY_BINS
            || bin_masses.iter().any(|&m| !(m >= 0.0))
            || (bin_masses.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidInput(format!(
                "need {DENSITY_BINS} non-negative masses summing to 1"
            )));
        }
        Ok(ConditionalDensity {
            z_value,
            bin_edges: uniform_edges(),
            bin_masses,
        })
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.bin_masses
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

fn uniform_edges() -> Vec<f64> {
    (0..=DENSITY_BINS)
        .map(|i| i as f64 / DENSITY_BINS as f64)
        .collect()
}

/// Classifier scores `f(x)` for every sample.
pub fn score_samples(f: &DenseNet, samples: &[Sample]) -> Result<Vec<f64>> {
    if f.output_size() != 1 {
        return Err(Error::Config("classifier must have a single output".into()));
    }
    samples.iter().map(|s| Ok(f.forward(&s.x)?[0])).collect()
}

/// Histogram of `f(X)` over `n_samples` draws with the nuisance fixed at `z_value`.
pub fn conditional_score_density(
    f: &DenseNet,
    model: &dyn NuisanceModel,
    z_value: f64,
    n_samples: usize,
    label: Option<u8>,
    seed: u64,
) -> Result<ConditionalDensity> {
    if n_samples < MIN_DENSITY_SAMPLES {
        return Err(Error::Evaluation(format!(
            "{n_samples} samples is too few for a density; need at least {MIN_DENSITY_SAMPLES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = model.sample_at(z_value, n_samples, label, &mut rng);
    ConditionalDensity::from_scores(z_value, &score_samples(f, &samples)?)
}

/// Largest absolute difference between the cumulative bin masses.
pub fn ks_distance(a: &ConditionalDensity, b: &ConditionalDensity) -> Result<f64> {
    if a.bin_edges != b.bin_edges {
        return Err(Error::Evaluation(
            "densities have different bin edges".into(),
        ));
    }
    Ok(a.cumulative()
        .iter()
        .zip(b.cumulative())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        .min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsPair {
    pub z_a: f64,
    pub z_b: f64,
    pub ks: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PivotalityReport {
    pub label: Option<u8>,
    pub densities: Vec<ConditionalDensity>,
    /// Every unordered pair of grid points.
    pub pairs: Vec<KsPair>,
    pub max_ks: f64,
}

/// Conditional densities at each `z` in `z_grid` and their pairwise KS
/// distances. With `label` set, only that class is drawn.
pub fn pivotality_report(
    f: &DenseNet,
    model: &dyn NuisanceModel,
    z_grid: &[f64],
    n_samples: usize,
    label: Option<u8>,
    seed: u64,
) -> Result<PivotalityReport> {
    if z_grid.is_empty() {
        return Err(Error::Evaluation("empty z grid".into()));
    }
    let densities = z_grid
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            conditional_score_density(f, model, z, n_samples, label, seed.wrapping_add(i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..densities.len() {
        for j in i + 1..densities.len() {
            pairs.push(KsPair {
                z_a: densities[i].z_value,
                z_b: densities[j].z_value,
                ks: ks_distance(&densities[i], &densities[j])?,
            });
        }
    }
    let max_ks = pairs.iter().map(|p| p.ks).fold(0.0, f64::max);
    Ok(PivotalityReport {
        label,
        densities,
        pairs,
        max_ks,
    })
}

/// Differential entropy of `N(0, σ²)`: `ln(σ √(2πe))`.
pub fn entropy_gaussian(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(sigma.ln() + 0.5 * (2.0 * PI * E).ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_mc: usize,
    pub warning: Option<String>,
}

/// `ln N(x; mean, cov)` for a 2D Gaussian.
pub(crate) fn log_normal_2d(x: [f64; 2], mean: [f64; 2], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (dx, dy) = (x[0] - mean[0], x[1] - mean[1]);
    let quad =
        (cov[1][1] * dx * dx - (cov[0][1] + cov[1][0]) * dx * dy + cov[0][0] * dy * dy) / det;
    -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * quad
}

/// `ln p(x | y)` for the toy, with `z` integrated out against its Gaussian
/// prior by Gauss-Hermite quadrature.
pub struct ToyClassDensity {
    spec: ToySpec,
    /// `(z node, ln weight)` with the `1/√π` normalisation folded in.
    nodes: Vec<(f64, f64)>,
}

impl ToyClassDensity {
    pub fn new(spec: &ToySpec) -> Result<Self> {
        spec.validate()?;
        let rule = GaussHermite::new(NonZeroUsize::new(HERMITE_ORDER).unwrap());
        let nodes = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(t, w)| {
                (
                    std::f64::consts::SQRT_2 * spec.z_prior_sigma * t,
                    w.ln() - 0.5 * PI.ln(),
                )
            })
            .collect();
        Ok(ToyClassDensity {
            spec: spec.clone(),
            nodes,
        })
    }

    pub fn ln_density(&self, y: u8, x: [f64; 2]) -> f64 {
        let cov = self.spec.class_cov(y);
        if y == 0 || self.spec.nuisance_coupling == 0.0 {
            return log_normal_2d(x, self.spec.class_mean(y, 0.0), cov);
        }
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .map(|&(z, lw)| lw + log_normal_2d(x, self.spec.class_mean(y, z), cov))
            .collect();
        log_sum_exp(&terms)
    }

    /// Bayes posterior `p(y = 1 | x)` under equal class priors.
    pub fn posterior(&self, x: [f64; 2]) -> f64 {
        let (l0, l1) = (self.ln_density(0, x), self.ln_density(1, x));
        1.0 / (1.0 + (l0 - l1).exp())
    }
}

fn binary_entropy(q: f64) -> f64 {
    let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
    h(q) + h(1.0 - q)
}

/// Monte Carlo estimate of `H(Y|X)` for a toy problem, drawing `n_mc`
/// samples from `spec` (with its seed) and evaluating the exact posterior.
pub fn estimate_h_y_given_x(spec: &ToySpec, n_mc: usize) -> Result<EntropyEstimate> {
    if n_mc < 2 {
        return Err(Error::InvalidInput(
            "need at least two Monte Carlo samples".into(),
        ));
    }
    let density = ToyClassDensity::new(spec)?;
    let draws = generate_toy(&ToySpec {
        n: n_mc,
        ..spec.clone()
    })?;
    let h: Vec<f64> = draws
        .iter()
        .map(|s| binary_entropy(density.posterior([s.x[0], s.x[1]])))
        .collect();
    let n = h.len() as f64;
    let value = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let warning = (std_error > HYX_TARGET_STD_ERROR).then(|| {
        format!("standard error {std_error:.4} exceeds {HYX_TARGET_STD_ERROR}; increase n_mc")
    });
    Ok(EntropyEstimate {
        value,
        std_error,
        n_mc,
        warning,
    })
}

/// `√(2((s + b) ln(1 + s/b) − s))`.
pub fn ams(s: f64, b: f64) -> Result<f64> {
    ams_with_uncertainty(s, b, 0.0)
}

/// AMS with an absolute background uncertainty `sigma_b`:
///
/// `√(2[(s+b) ln((s+b)(b+σ²) / (b²+(s+b)σ²)) − (b²/σ²) ln(1 + σ²s / (b(b+σ²)))])`,
/// which reduces to [`ams`] at `σ = 0`.
pub fn ams_with_uncertainty(s: f64, b: f64, sigma_b: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidInput(format!(
            "background must be positive, got {b}"
        )));
    }
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidInput(format!(
            "signal must be non-negative, got {s}"
        )));
    }
    if !(sigma_b >= 0.0) || !sigma_b.is_finite() {
        return Err(Error::InvalidInput(format!(
            "uncertainty must be non-negative, got {sigma_b}"
        )));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let radicand = if sigma_b == 0.0 {
        2.0 * ((s + b) * (s / b).ln_1p() - s)
    } else {
        let v = sigma_b * sigma_b;
        let first = (s + b) * (s * b / (b * b + (s + b) * v)).ln_1p();
        let second = b * b / v * (v * s / (b * (b + v))).ln_1p();
        2.0 * (first - second)
    };
    Ok(radicand.max(0.0).sqrt())
}

/// How background uncertainty enters the scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Systematics {
    /// Plain AMS, no background uncertainty.
    None,
    /// Background uncertainty at each threshold is half the spread between
    /// the background yields computed from `z = 0` and `z = 1` events alone,
    /// each rescaled to the total background weight.
    NuisanceSpread,
}

impl std::fmt::Display for Systematics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Systematics::None => "none",
            Systematics::NuisanceSpread => "nuisance-spread",
        })
    }
}

impl std::str::FromStr for Systematics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Systematics::None),
            "nuisance-spread" => Ok(Systematics::NuisanceSpread),
            _ => Err(Error::Config(format!("unknown systematics mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmsScanResult {
    pub thresholds: Vec<f64>,
    /// `None` where `b(t) = 0`.
    pub ams_values: Vec<Option<f64>>,
    pub signal: Vec<f64>,
    pub background: Vec<f64>,
    pub background_sigma: Vec<f64>,
    pub best_threshold: f64,
    pub best_ams: f64,
}

/// `n` evenly spaced thresholds from 0 to 1 exclusive of 1.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / n as f64).collect()
}

pub fn ams_scan(
    f: &DenseNet,
    samples: &[Sample],
    thresholds: &[f64],
    systematics: Systematics,
) -> Result<AmsScanResult> {
    let scores = score_samples(f, samples)?;
    ams_scan_scores(&scores, samples, thresholds, systematics)
}

/// AMS scan over precomputed scores: `s(t)` and `b(t)` are the summed weights
/// of class-1 and class-0 events with score above `t`.
pub fn ams_scan_scores(
    scores: &[f64],
    samples: &[Sample],
    thresholds: &[f64],
    systematics: Systematics,
) -> Result<AmsScanResult> {
    if thresholds.is_empty() {
        return Err(Error::Evaluation("empty threshold grid".into()));
    }
    if scores.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: scores.len(),
        });
    }
    if !samples.iter().any(|s| s.y == 1) || !samples.iter().any(|s| s.y == 0) {
        return Err(Error::Evaluation("AMS scan needs both classes".into()));
    }
    let bkg_total: f64 = samples.iter().filter(|s| s.y == 0).map(|s| s.weight).sum();
    let bkg_total_at = |z: f64| -> f64 {
        samples
            .iter()
            .filter(|s| s.y == 0 && s.z == z)
            .map(|s| s.weight)
            .sum()
    };
    let (bkg_z0, bkg_z1) = (bkg_total_at(0.0), bkg_total_at(1.0));
    if systematics == Systematics::NuisanceSpread && (bkg_z0 == 0.0 || bkg_z1 == 0.0) {
        return Err(Error::Evaluation(
            "nuisance spread needs background at z = 0 and z = 1".into(),
        ));
    }

    let mut result = AmsScanResult {
        thresholds: thresholds.to_vec(),
        ams_values: Vec::with_capacity(thresholds.len()),
        signal: Vec::with_capacity(thresholds.len()),
        background: Vec::with_capacity(thresholds.len()),
        background_sigma: Vec::with_capacity(thresholds.len()),
        best_threshold: f64::NAN,
        best_ams: f64::NEG_INFINITY,
    };
    for &t in thresholds {
        let (mut s, mut b, mut b0, mut b1) = (0.0, 0.0, 0.0, 0.0);
        for (sample, &score) in samples.iter().zip(scores) {
            if score <= t {
                continue;
            }
            if sample.y == 1 {
                s += sample.weight;
            } else {
                b += sample.weight;
                if sample.z == 0.0 {
                    b0 += sample.weight;
                } else if sample.z == 1.0 {
                    b1 += sample.weight;
                }
            }
        }
        let sigma = match systematics {
            Systematics::None => 0.0,
            Systematics::NuisanceSpread => {
                0.5 * (b1 * bkg_total / bkg_z1 - b0 * bkg_total / bkg_z0).abs()
            }
        };
        let value = if b > 0.0 {
            Some(ams_with_uncertainty(s, b, sigma)?)
        } else {
            None
        };
        if let Some(v) = value {
            if v > result.best_ams {
                result.best_ams = v;
                result.best_threshold = t;
            }
        }
        result.ams_values.push(value);
        result.signal.push(s);
        result.background.push(b);
        result.background_sigma.push(sigma);
    }
    if result.best_threshold.is_nan() {
        return Err(Error::Evaluation(
            "no threshold leaves any background".into(),
        ));
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn point_mass(z: f64, bin: usize) -> ConditionalDensity {
        let mut m = vec![0.0; DENSITY_BINS];
        m[bin] = 1.0;
        ConditionalDensity::from_masses(z, m).unwrap()
    }

    #[test]
    fn ks_extremes() {
        let a = point_mass(0.0, 0);
        assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_distance(&a, &point_mass(1.0, 49)).unwrap(), 1.0);
    }

    #[test]
    fn ks_two_bin_example() {
        let mut m1 = vec![0.0; DENSITY_BINS];
        let mut m2 = vec![0.0; DENSITY_BINS];
        (m1[10], m1[11]) = (0.3, 0.7);
        (m2[10], m2[11]) = (0.7, 0.3);
        let a = ConditionalDensity::from_masses(0.0, m1).unwrap();
        let b = ConditionalDensity::from_masses(1.0, m2).unwrap();
        assert!(close(ks_distance(&a, &b).unwrap(), 0.4, 1e-15));
    }

    #[test]
    fn ks_rejects_mismatched_edges() {
        let a = point_mass(0.0, 3);
        let mut b = point_mass(0.0, 3);
        b.bin_edges[1] = 0.021;
        assert!(ks_distance(&a, &b).is_err());
    }

    #[test]
    fn constant_classifier_density_and_report() {
        // zero weights: f ≡ 0.5, which lands in bin 25
        let f =
            DenseNet::zeros(vec![2, 4, 1], vec![Activation::Tanh, Activation::Sigmoid]).unwrap();
        let toy = ToySpec::default();
        for z in [-1.0, 0.0, 1.0] {
            let d = conditional_score_density(&f, &toy, z, 1000, None, 3).unwrap();
            assert_eq!(d.bin_masses[25], 1.0);
        }
        let report = pivotality_report(&f, &toy, &[-1.0, 0.0, 1.0], 1000, None, 1).unwrap();
        assert_eq!(report.pairs.len(), 3);
        assert_eq!(report.max_ks, 0.0);
        let single = pivotality_report(&f, &toy, &[0.0], 1000, None, 1).unwrap();
        assert!(single.pairs.is_empty());
        assert_eq!(single.max_ks, 0.0);
        assert!(conditional_score_density(&f, &toy, 0.0, 999, None, 3).is_err());
        assert!(pivotality_report(&f, &toy, &[], 1000, None, 1).is_err());
    }

    #[test]
    fn gaussian_entropy_values() {
        assert!(close(entropy_gaussian(1.0).unwrap(), 1.4189, 1e-4));
        assert!(close(entropy_gaussian(2.0).unwrap(), 2.1121, 1e-4));
        assert!(close(
            entropy_gaussian(1.0 / (2.0 * PI * E).sqrt()).unwrap(),
            0.0,
            1e-15
        ));
        assert!(entropy_gaussian(0.0).is_err());
        assert!(entropy_gaussian(-1.0).is_err());
    }

    #[test]
    fn quadrature_marginal_matches_closed_form() {
        // integrating z out of N(x; (1, 1 + z), I) against N(0, σ²) gives
        // N(x; (1, 1), diag(1, 1 + σ²))
        for sigma in [0.5, 1.0, 2.0] {
            let spec = ToySpec {
                z_prior_sigma: sigma,
                ..Default::default()
            };
            let density = ToyClassDensity::new(&spec).unwrap();
            for x in [[0.0, 0.0], [1.5, -0.7], [-1.0, 3.0]] {
                let want = log_normal_2d(x, [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0 + sigma * sigma]]);
                assert!(
                    close(density.ln_density(1, x), want, 1e-10),
                    "σ={sigma} x={x:?}"
                );
            }
        }
    }

    #[test]
    fn indistinguishable_classes_have_ln2_entropy() {
        let spec = ToySpec {
            n: 1,
            class1_mean: [0.0, 0.0],
            class1_cov: [[1.0, -0.5], [-0.5, 1.0]],
            nuisance_coupling: 0.0,
            ..Default::default()
        };
        let est = estimate_h_y_given_x(&spec, 2000).unwrap();
        assert!(close(est.value, 2f64.ln(), 1e-12));
    }

    #[test]
    fn separated_classes_have_zero_entropy() {
        let spec = ToySpec {
            class1_mean: [1e6, 1e6],
            ..Default::default()
        };
        let est = estimate_h_y_given_x(&spec, 2000).unwrap();
        assert!(est.value < 1e-12);
        assert!(est.warning.is_none());
    }

    #[test]
    fn small_mc_budget_warns() {
        let est = estimate_h_y_given_x(&ToySpec::default(), 50).unwrap();
        assert!(est.warning.is_some());
        assert!(est.value > 0.0 && est.value < 2f64.ln());
    }

    #[test]
    fn ams_values() {
        assert_eq!(ams(0.0, 123.0).unwrap(), 0.0);
        assert!(close(ams(100.0, 1000.0).unwrap(), 3.1117, 1e-3));
        let small = ams(1.0, 1e6).unwrap();
        assert!(((small - 1e-3) / 1e-3).abs() < 0.01);
        assert!(ams(1.0, 0.0).is_err());
        assert!(ams(-1.0, 10.0).is_err());
    }

    #[test]
    fn uncertainty_reduces_significance() {
        let plain = ams(50.0, 200.0).unwrap();
        assert_eq!(ams_with_uncertainty(50.0, 200.0, 0.0).unwrap(), plain);
        assert!(close(
            ams_with_uncertainty(50.0, 200.0, 1e-4).unwrap(),
            plain,
            1e-6
        ));
        let mut last = plain;
        for sigma in [1.0, 5.0, 20.0, 80.0] {
            let v = ams_with_uncertainty(50.0, 200.0, sigma).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    fn labelled(y: u8, z: f64, weight: f64) -> Sample {
        Sample {
            x: vec![0.0],
            y,
            z,
            weight,
        }
    }

    #[test]
    fn scan_at_zero_threshold_uses_totals() {
        let samples: Vec<Sample> = (0..10)
            .map(|_| labelled(1, 0.0, 10.0))
            .chain((0..10).map(|_| labelled(0, 0.0, 100.0)))
            .collect();
        let scores: Vec<f64> = (0..20).map(|i| (i as f64 + 0.5) / 20.0).collect();
        let scan = ams_scan_scores(&scores, &samples, &[0.0], Systematics::None).unwrap();
        assert!(close(scan.ams_values[0].unwrap(), 3.1117, 1e-3));
        assert!(ams_scan_scores(&scores, &samples, &[], Systematics::None).is_err());
    }

    #[test]
    fn separating_scores_leave_undefined_cells() {
        let samples: Vec<Sample> = (0..10)
            .map(|_| labelled(1, 0.0, 10.0))
            .chain((0..10).map(|_| labelled(0, 0.0, 100.0)))
            .collect();
        // perfectly separating classifier
        let scores: Vec<f64> = samples.iter().map(|s| 0.1 + 0.8 * f64::from(s.y)).collect();
        let scan = ams_scan_scores(&scores, &samples, &[0.0, 0.5], Systematics::None).unwrap();
        assert_eq!(scan.signal[1], 100.0);
        assert_eq!(scan.background[1], 0.0);
        assert!(scan.ams_values[1].is_none());
        assert_eq!(scan.best_threshold, 0.0);
    }

    #[test]
    fn nuisance_spread_is_half_the_yield_difference() {
        let samples = vec![
            labelled(1, 0.0, 50.0),
            labelled(1, 1.0, 50.0),
            labelled(0, 0.0, 250.0),
            labelled(0, 0.0, 250.0),
            labelled(0, 1.0, 250.0),
            labelled(0, 1.0, 250.0),
        ];
        // one z=0 and both z=1 background events pass t = 0.5
        let scores = [0.9, 0.9, 0.1, 0.9, 0.9, 0.9];
        let scan = ams_scan_scores(&scores, &samples, &[0.5], Systematics::NuisanceSpread).unwrap();
        assert_eq!(scan.background[0], 750.0);
        // yields rescaled to 1000: z=0 → 500, z=1 → 1000
        assert!(close(scan.background_sigma[0], 250.0, 1e-12));
        let want = ams_with_uncertainty(100.0, 750.0, 250.0).unwrap();
        assert!(close(scan.best_ams, want, 1e-15));
    }
}

//! End-to-end runs: configuration, pretraining followed by adversarial
//! training, post-training evaluation, and λ sweeps.
//!
//! A [`RunConfig`] serialises to a flat `key = value` text file. Every key
//! can be set from a file or overridden individually with [`RunConfig::set`].

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::AdversaryKind;
use crate::datagen::{GeneratorSpec, Sample};
use crate::error::{Error, Result};
use crate::eval::{
    ams_scan, pivotality_report, threshold_grid, AmsScanResult, PivotalityReport, Systematics,
};
use crate::nn::{Activation, DenseNet};
use crate::optim::OptimizerKind;
use crate::train::{
    accuracy, adversarial_train, classifier_loss, pretrain_classifier, train_classifier_only,
    DataSplit, RunMetrics, Snapshot, TrainConfig,
};

/// Hidden layers of both networks. Output layers are implied: one sigmoid
/// unit for the classifier, the adversary head's width and activation for
/// the adversary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub classifier_hidden: Vec<usize>,
    pub classifier_activations: Vec<Activation>,
    pub adversary_hidden: Vec<usize>,
    pub adversary_activations: Vec<Activation>,
}

impl Default for ModelSpec {
    /// Two hidden layers of 20 units on each side.
    fn default() -> Self {
        ModelSpec {
            classifier_hidden: vec![20, 20],
            classifier_activations: vec![Activation::Tanh, Activation::Relu],
            adversary_hidden: vec![20, 20],
            adversary_activations: vec![Activation::Relu, Activation::Relu],
        }
    }
}

impl ModelSpec {
    /// Three hidden layers of `width` units, used for the surrogate dataset.
    pub fn deep(width: usize) -> Self {
        ModelSpec {
            classifier_hidden: vec![width; 3],
            classifier_activations: vec![Activation::Tanh, Activation::Relu, Activation::Relu],
            adversary_hidden: vec![width; 3],
            adversary_activations: vec![Activation::Relu; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, hidden, acts) in [
            (
                "classifier",
                &self.classifier_hidden,
                &self.classifier_activations,
            ),
            (
                "adversary",
                &self.adversary_hidden,
                &self.adversary_activations,
            ),
        ] {
            if hidden.len() != acts.len() {
                return Err(Error::Config(format!(
                    "{name}: {} hidden sizes but {} activations",
                    hidden.len(),
                    acts.len()
                )));
            }
            if hidden.contains(&0) {
                return Err(Error::Config(format!(
                    "{name}: hidden layers need at least one unit"
                )));
            }
            if let Some(a) = acts.iter().find(|a| a.output_only()) {
                return Err(Error::Config(format!(
                    "{name}: `{a}` is only valid on the output layer"
                )));
            }
        }
        Ok(())
    }

    pub fn classifier(&self, input_dim: usize, seed: u64) -> Result<DenseNet> {
        self.validate()?;
        let mut sizes = vec![input_dim];
        sizes.extend(&self.classifier_hidden);
        sizes.push(1);
        let mut acts = self.classifier_activations.clone();
        acts.push(Activation::Sigmoid);
        DenseNet::init(sizes, acts, seed)
    }

    pub fn adversary(&self, kind: AdversaryKind, seed: u64) -> Result<DenseNet> {
        self.validate()?;
        let mut sizes = vec![1];
        sizes.extend(&self.adversary_hidden);
        sizes.push(kind.output_width());
        let mut acts = self.adversary_activations.clone();
        acts.push(kind.output_activation());
        DenseNet::init(sizes, acts, seed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelSpec,
    /// `false` skips the adversary entirely and continues plain
    /// cross-entropy training for the same number of iterations.
    pub adversarial: bool,
    /// Draws per nuisance value for the conditional score densities.
    pub density_samples: usize,
    pub ams_thresholds: usize,
    pub systematics: Systematics,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            model: ModelSpec::default(),
            adversarial: true,
            density_samples: 20_000,
            ams_thresholds: 100,
            systematics: Systematics::NuisanceSpread,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "lambda",
    "minibatch_size",
    "adversary_steps",
    "iterations",
    "pretrain_epochs",
    "classifier_lr",
    "adversary_lr",
    "optimizer",
    "seed",
    "conditional_y",
    "adversary",
    "eval_fraction",
    "checkpoint_every",
    "classifier_hidden",
    "classifier_activations",
    "adversary_hidden",
    "adversary_activations",
    "adversarial",
    "density_samples",
    "ams_thresholds",
    "systematics",
];

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn split_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        if self.density_samples < crate::eval::MIN_DENSITY_SAMPLES {
            return Err(Error::Config(format!(
                "density_samples must be at least {}",
                crate::eval::MIN_DENSITY_SAMPLES
            )));
        }
        if self.ams_thresholds == 0 {
            return Err(Error::Config("ams_thresholds must be at least 1".into()));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let m = &self.model;
        Some(match key {
            "lambda" => t.lambda.to_string(),
            "minibatch_size" => t.minibatch_size.to_string(),
            "adversary_steps" => t.adversary_steps.to_string(),
            "iterations" => t.iterations.to_string(),
            "pretrain_epochs" => t.pretrain_epochs.to_string(),
            "classifier_lr" => t.classifier_lr.to_string(),
            "adversary_lr" => t.adversary_lr.to_string(),
            "optimizer" => t.optimizer.to_string(),
            "seed" => t.seed.to_string(),
            "conditional_y" => t.conditional_on_y.map_or("none".into(), |y| y.to_string()),
            "adversary" => t.adversary_kind.to_string(),
            "eval_fraction" => t.eval_fraction.to_string(),
            "checkpoint_every" => t.checkpoint_every.to_string(),
            "classifier_hidden" => join(&m.classifier_hidden),
            "classifier_activations" => join(&m.classifier_activations),
            "adversary_hidden" => join(&m.adversary_hidden),
            "adversary_activations" => join(&m.adversary_activations),
            "adversarial" => self.adversarial.to_string(),
            "density_samples" => self.density_samples.to_string(),
            "ams_thresholds" => self.ams_thresholds.to_string(),
            "systematics" => self.systematics.to_string(),
            _ => return None,
        })
    }

    /// Sets one key from its text form. Does not validate the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let bad = |e: &dyn std::fmt::Display| Error::Config(format!("{key} = `{value}`: {e}"));
        let t = &mut self.train;
        let m = &mut self.model;
        match key {
            "lambda" => t.lambda = value.parse().map_err(|e| bad(&e))?,
            "minibatch_size" => t.minibatch_size = value.parse().map_err(|e| bad(&e))?,
            "adversary_steps" => t.adversary_steps = value.parse().map_err(|e| bad(&e))?,
            "iterations" => t.iterations = value.parse().map_err(|e| bad(&e))?,
            "pretrain_epochs" => t.pretrain_epochs = value.parse().map_err(|e| bad(&e))?,
            "classifier_lr" => t.classifier_lr = value.parse().map_err(|e| bad(&e))?,
            "adversary_lr" => t.adversary_lr = value.parse().map_err(|e| bad(&e))?,
            "optimizer" => t.optimizer = value.parse::<OptimizerKind>().map_err(|e| bad(&e))?,
            "seed" => t.seed = value.parse().map_err(|e| bad(&e))?,
            "conditional_y" => {
                t.conditional_on_y = match value {
                    "none" | "" => None,
                    v => Some(v.parse().map_err(|e| bad(&e))?),
                }
            }
            "adversary" => t.adversary_kind = value.parse().map_err(|e: Error| bad(&e))?,
            "eval_fraction" => t.eval_fraction = value.parse().map_err(|e| bad(&e))?,
            "checkpoint_every" => t.checkpoint_every = value.parse().map_err(|e| bad(&e))?,
            "classifier_hidden" => m.classifier_hidden = split_list(value).map_err(|e| bad(&e))?,
            "classifier_activations" => {
                m.classifier_activations = split_list(value).map_err(|e: Error| bad(&e))?
            }
            "adversary_hidden" => m.adversary_hidden = split_list(value).map_err(|e| bad(&e))?,
            "adversary_activations" => {
                m.adversary_activations = split_list(value).map_err(|e: Error| bad(&e))?
            }
            "adversarial" => self.adversarial = value.parse().map_err(|e| bad(&e))?,
            "density_samples" => self.density_samples = value.parse().map_err(|e| bad(&e))?,
            "ams_thresholds" => self.ams_thresholds = value.parse().map_err(|e| bad(&e))?,
            "systematics" => self.systematics = value.parse().map_err(|e: Error| bad(&e))?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        out
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                detail: "expected `key = value`".into(),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i as u64 + 1,
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn classifier_seed(&self) -> u64 {
        self.train.seed
    }

    pub fn adversary_seed(&self) -> u64 {
        self.train.seed.wrapping_add(1)
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub pretrained: DenseNet,
    pub classifier: DenseNet,
    /// `None` for classifier-only runs.
    pub adversary: Option<DenseNet>,
    pub metrics: RunMetrics,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub pretrained: Option<DenseNet>,
    pub last_good: Option<Snapshot>,
    pub metrics: RunMetrics,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<RunFailure> for Error {
    fn from(failure: RunFailure) -> Self {
        failure.error
    }
}

/// Initialises both networks from the config seeds, pretrains the
/// classifier, then runs adversarial (or classifier-only) training.
pub fn run(data: &[Sample], config: &RunConfig) -> std::result::Result<RunResult, RunFailure> {
    let early = |error| RunFailure {
        error,
        pretrained: None,
        last_good: None,
        metrics: RunMetrics::default(),
    };
    config.validate().map_err(early)?;
    let input_dim = data
        .first()
        .map(|s| s.x.len())
        .ok_or_else(|| early(Error::InvalidInput("empty dataset".into())))?;
    let f0 = config
        .model
        .classifier(input_dim, config.classifier_seed())
        .map_err(early)?;
    let pretrained = pretrain_classifier(&f0, data, &config.train).map_err(early)?;

    if !config.adversarial {
        return match train_classifier_only(&pretrained, data, &config.train) {
            Ok((classifier, metrics)) => Ok(RunResult {
                pretrained,
                classifier,
                adversary: None,
                metrics,
                snapshots: Vec::new(),
            }),
            Err(error) => Err(RunFailure {
                error,
                pretrained: Some(pretrained),
                last_good: None,
                metrics: RunMetrics::default(),
            }),
        };
    }

    let r0 = config
        .model
        .adversary(config.train.adversary_kind, config.adversary_seed())
        .map_err(early)?;
    match adversarial_train(&pretrained, &r0, data, &config.train) {
        Ok(outcome) => Ok(RunResult {
            pretrained,
            classifier: outcome.classifier,
            adversary: Some(outcome.adversary),
            metrics: outcome.metrics,
            snapshots: outcome.snapshots,
        }),
        Err(failure) => Err(RunFailure {
            error: failure.error,
            pretrained: Some(pretrained),
            last_good: failure.last_good,
            metrics: failure.metrics,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss_f: f64,
    pub accuracy: f64,
    pub pivotality: Option<PivotalityReport>,
    pub ams: Option<AmsScanResult>,
}

impl Evaluation {
    /// Headline numbers as `key = value` lines.
    pub fn summary_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "loss_f = {}", self.loss_f).unwrap();
        writeln!(out, "accuracy = {}", self.accuracy).unwrap();
        if let Some(p) = &self.pivotality {
            writeln!(out, "max_ks = {}", p.max_ks).unwrap();
        }
        if let Some(a) = &self.ams {
            writeln!(out, "best_ams = {}", a.best_ams).unwrap();
            writeln!(out, "best_threshold = {}", a.best_threshold).unwrap();
        }
        out
    }
}

/// Seed offset for the conditional-density draws, kept apart from the
/// training streams.
const DENSITY_SEED_OFFSET: u64 = 0x5eed_0001;

/// Loss and accuracy on `held_out`; conditional densities when a generator
/// is known; an AMS scan when `ams_set` is given.
pub fn evaluate(
    f: &DenseNet,
    held_out: &[Sample],
    generator: Option<&GeneratorSpec>,
    ams_set: Option<&[Sample]>,
    config: &RunConfig,
) -> Result<Evaluation> {
    let pivotality = generator
        .map(|g| {
            pivotality_report(
                f,
                g,
                &g.z_grid(),
                config.density_samples,
                config.train.conditional_on_y,
                config.train.seed.wrapping_add(DENSITY_SEED_OFFSET),
            )
        })
        .transpose()?;
    let ams = ams_set
        .map(|set| {
            ams_scan(
                f,
                set,
                &threshold_grid(config.ams_thresholds),
                config.systematics,
            )
        })
        .transpose()?;
    Ok(Evaluation {
        loss_f: classifier_loss(f, held_out)?,
        accuracy: accuracy(f, held_out)?,
        pivotality,
        ams,
    })
}

/// The held-out part of `data` under the config's split.
pub fn held_out(data: &[Sample], config: &RunConfig) -> Result<Vec<Sample>> {
    Ok(DataSplit::new(data, config.train.eval_fraction, config.train.seed)?.eval)
}

/// Independent validation and test draws from the generator, seeded away
/// from the training data.
pub fn reference_sets(generator: &GeneratorSpec, n: usize) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let base = generator.seed();
    let validation = generator
        .with_draw(n, base.wrapping_add(1_000_003))
        .generate()?;
    let test = generator
        .with_draw(n, base.wrapping_add(2_000_003))
        .generate()?;
    Ok((validation, test))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub lambdas: Vec<f64>,
    pub repeats: usize,
    /// Worker threads; each member trains single-threaded.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberScores {
    pub best_ams: f64,
    pub best_threshold: f64,
    pub validation_ams: f64,
    pub max_ks: Option<f64>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepMember {
    pub lambda: f64,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: std::result::Result<MemberScores, String>,
}

/// Trains every `(λ, repeat)` pair. Repeat `i` uses seed `config.seed + i`
/// for all λ. A failing member is recorded and the sweep carries on.
pub fn run_sweep(
    data: &[Sample],
    config: &RunConfig,
    plan: &SweepPlan,
    generator: Option<&GeneratorSpec>,
    validation: &[Sample],
    test: &[Sample],
) -> Result<Vec<SweepMember>> {
    if plan.lambdas.is_empty() {
        return Err(Error::Config("sweep needs at least one lambda".into()));
    }
    if plan.repeats == 0 || plan.jobs == 0 {
        return Err(Error::Config("repeats and jobs must be at least 1".into()));
    }
    config.validate()?;
    let members: Vec<(f64, usize)> = (0..plan.repeats)
        .flat_map(|rep| plan.lambdas.iter().map(move |&l| (l, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", plan.jobs)))?;
    let grid = threshold_grid(config.ams_thresholds);
    Ok(pool.install(|| {
        members
            .par_iter()
            .map(|&(lambda, repeat)| {
                let mut member_config = config.clone();
                member_config.train.lambda = lambda;
                member_config.train.seed = config.train.seed.wrapping_add(repeat as u64);
                let outcome = (|| -> Result<MemberScores> {
                    let result = run(data, &member_config)?;
                    let f = &result.classifier;
                    let eval = evaluate(
                        f,
                        &held_out(data, &member_config)?,
                        generator,
                        Some(test),
                        &member_config,
                    )?;
                    let val = ams_scan(f, validation, &grid, member_config.systematics)?;
                    let ams = eval.ams.expect("test set given");
                    Ok(MemberScores {
                        best_ams: ams.best_ams,
                        best_threshold: ams.best_threshold,
                        validation_ams: val.best_ams,
                        max_ks: eval.pivotality.map(|p| p.max_ks),
                        accuracy: accuracy(f, test)?,
                    })
                })()
                .map_err(|e| e.to_string());
                SweepMember {
                    lambda,
                    repeat,
                    seed: member_config.train.seed,
                    outcome,
                }
            })
            .collect()
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub runs: usize,
    pub failures: usize,
    pub mean_best_ams: f64,
    pub std_best_ams: f64,
    pub mean_validation_ams: f64,
    pub mean_max_ks: f64,
    pub std_max_ks: f64,
    pub mean_accuracy: f64,
}

/// Mean and sample standard deviation; the deviation is NaN below two values.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn pooled_std(a: f64, b: f64) -> f64 {
    ((a * a + b * b) / 2.0).sqrt()
}

/// One row per λ, in first-appearance order.
pub fn summarize(members: &[SweepMember]) -> Vec<SweepRow> {
    let mut lambdas: Vec<f64> = Vec::new();
    for m in members {
        if !lambdas.contains(&m.lambda) {
            lambdas.push(m.lambda);
        }
    }
    lambdas
        .into_iter()
        .map(|lambda| {
            let rows: Vec<&SweepMember> = members.iter().filter(|m| m.lambda == lambda).collect();
            let ok: Vec<&MemberScores> = rows
                .iter()
                .filter_map(|m| m.outcome.as_ref().ok())
                .collect();
            let col = |f: fn(&MemberScores) -> f64| ok.iter().map(|s| f(s)).collect::<Vec<_>>();
            let (mean_best_ams, std_best_ams) = mean_std(&col(|s| s.best_ams));
            let (mean_max_ks, std_max_ks) = mean_std(&col(|s| s.max_ks.unwrap_or(f64::NAN)));
            SweepRow {
                lambda,
                runs: ok.len(),
                failures: rows.len() - ok.len(),
                mean_best_ams,
                std_best_ams,
                mean_validation_ams: mean_std(&col(|s| s.validation_ams)).0,
                mean_max_ks,
                std_max_ks,
                mean_accuracy: mean_std(&col(|s| s.accuracy)).0,
            }
        })
        .collect()
}

/// Among rows strictly between the smallest and largest λ, the one with the
/// best mean validation AMS.
pub fn select_interior(rows: &[SweepRow]) -> Option<&SweepRow> {
    let lo = rows.iter().map(|r| r.lambda).fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    rows.iter()
        .filter(|r| r.lambda > lo && r.lambda < hi && r.runs > 0)
        .max_by(|a, b| a.mean_validation_ams.total_cmp(&b.mean_validation_ams))
}

pub const MEMBERS_HEADER: &str =
    "lambda,repeat,seed,status,best_ams,best_threshold,validation_ams,max_ks,accuracy,error";
pub const SUMMARY_HEADER: &str =
    "lambda,runs,failures,mean_best_ams,std_best_ams,mean_validation_ams,mean_max_ks,std_max_ks,mean_accuracy";

pub fn members_csv(members: &[SweepMember]) -> String {
    let mut out = format!("{MEMBERS_HEADER}\n");
    for m in members {
        match &m.outcome {
            Ok(s) => writeln!(
                out,
                "{},{},{},ok,{:?},{:?},{:?},{},{:?},",
                m.lambda,
                m.repeat,
                m.seed,
                s.best_ams,
                s.best_threshold,
                s.validation_ams,
                s.max_ks.map_or(String::new(), |v| format!("{v:?}")),
                s.accuracy
            ),
            Err(e) => writeln!(
                out,
                "{},{},{},failed,,,,,,\"{}\"",
                m.lambda,
                m.repeat,
                m.seed,
                e.replace('"', "'")
            ),
        }
        .unwrap();
    }
    out
}

pub fn summary_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.lambda,
            r.runs,
            r.failures,
            r.mean_best_ams,
            r.std_best_ams,
            r.mean_validation_ams,
            r.mean_max_ks,
            r.std_max_ks,
            r.mean_accuracy
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_toy, SurrogateSpec, ToySpec};

    #[test]
    fn config_text_round_trip() {
        let mut config = RunConfig::default();
        config.train.lambda = 0.1 + 0.2;
        config.train.conditional_on_y = Some(0);
        config.train.adversary_kind = AdversaryKind::Categorical { classes: 2 };
        config.model = ModelSpec::deep(7);
        config.adversarial = false;
        config.systematics = Systematics::None;
        let back = RunConfig::parse(&config.to_text()).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.train.lambda.to_bits(), config.train.lambda.to_bits());
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        assert!(matches!(
            RunConfig::parse("lambda = 1\n\nbogus = 3\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            RunConfig::parse("# c\nlambda 1"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            RunConfig::parse("optimizer = rmsprop"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn later_text_overrides_earlier() {
        let mut config = RunConfig::parse("lambda = 3\nseed = 9").unwrap();
        config.set("lambda", "7").unwrap();
        assert_eq!(config.train.lambda, 7.0);
        assert_eq!(config.train.seed, 9);
    }

    #[test]
    fn model_spec_builds_matching_nets() {
        let spec = ModelSpec::deep(4);
        let f = spec.classifier(8, 0).unwrap();
        assert_eq!(f.layer_sizes(), &[8, 4, 4, 4, 1]);
        let kind = AdversaryKind::Mixture { components: 3 };
        let r = spec.adversary(kind, 1).unwrap();
        kind.check(&r).unwrap();
        let bad = ModelSpec {
            classifier_activations: vec![Activation::Softmax, Activation::Relu],
            ..ModelSpec::default()
        };
        assert!(bad.classifier(2, 0).is_err());
    }

    fn tiny_config() -> RunConfig {
        let mut c = RunConfig::default();
        c.train.adversary_steps = 2;
        c.train.iterations = 6;
        c.train.pretrain_epochs = 1;
        c.train.minibatch_size = 16;
        c.train.checkpoint_every = 3;
        c.model.classifier_hidden = vec![6];
        c.model.classifier_activations = vec![Activation::Tanh];
        c.model.adversary_hidden = vec![6];
        c.model.adversary_activations = vec![Activation::Relu];
        c.density_samples = 1000;
        c
    }

    #[test]
    fn run_and_evaluate_toy() {
        let spec = ToySpec::new(400, 3);
        let data = generate_toy(&spec).unwrap();
        let config = tiny_config();
        let result = run(&data, &config).unwrap();
        assert_eq!(result.metrics.records.len(), 6);
        assert_eq!(result.snapshots.len(), 2);
        let eval = evaluate(
            &result.classifier,
            &held_out(&data, &config).unwrap(),
            Some(&GeneratorSpec::Toy(spec)),
            None,
            &config,
        )
        .unwrap();
        assert_eq!(eval.pivotality.unwrap().densities.len(), 3);
        assert!(eval.ams.is_none());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let gen = GeneratorSpec::Surrogate(SurrogateSpec {
            n: 300,
            ..Default::default()
        });
        let data = gen.generate().unwrap();
        let (val, test) = reference_sets(&gen, 300).unwrap();
        let mut config = tiny_config();
        config.model = ModelSpec::deep(4);
        config.train.adversary_kind = AdversaryKind::Categorical { classes: 2 };
        config.train.conditional_on_y = Some(0);
        let plan = SweepPlan {
            lambdas: vec![0.0, f64::NAN, 5.0],
            repeats: 2,
            jobs: 2,
        };
        let members = run_sweep(&data, &config, &plan, Some(&gen), &val, &test).unwrap();
        assert_eq!(members.len(), 6);
        assert!(members
            .iter()
            .filter(|m| m.lambda.is_nan())
            .all(|m| m.outcome.is_err()));
        assert!(members
            .iter()
            .filter(|m| !m.lambda.is_nan())
            .all(|m| m.outcome.is_ok()));
        let rows = summarize(&members);
        // NaN never equals itself, so each failed member gets its own row.
        let finite: Vec<&SweepRow> = rows.iter().filter(|r| !r.lambda.is_nan()).collect();
        assert_eq!(finite.len(), 2);
        assert!(finite
            .iter()
            .all(|r| r.runs == 2 && r.std_best_ams.is_finite()));
        assert!(
            members_csv(&members)
                .lines()
                .filter(|l| l.contains(",failed,"))
                .count()
                == 2
        );
    }

    #[test]
    fn single_lambda_two_repeats_gives_one_row() {
        let m = |repeat, v| SweepMember {
            lambda: 0.0,
            repeat,
            seed: repeat as u64,
            outcome: Ok(MemberScores {
                best_ams: v,
                best_threshold: 0.5,
                validation_ams: v,
                max_ks: None,
                accuracy: 0.7,
            }),
        };
        let rows = summarize(&[m(0, 3.0), m(1, 5.0)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].runs, 2);
        assert_eq!(rows[0].mean_best_ams, 4.0);
        assert!((rows[0].std_best_ams - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interior_selection_skips_endpoints() {
        let row = |lambda, v| SweepRow {
            lambda,
            runs: 1,
            failures: 0,
            mean_best_ams: v,
            std_best_ams: 0.0,
            mean_validation_ams: v,
            mean_max_ks: 0.0,
            std_max_ks: 0.0,
            mean_accuracy: 0.0,
        };
        let rows = [
            row(0.0, 9.0),
            row(1.0, 2.0),
            row(10.0, 3.0),
            row(500.0, 9.0),
        ];
        assert_eq!(select_interior(&rows).unwrap().lambda, 10.0);
        assert!(select_interior(&rows[..2]).is_none());
    }
}

//! Pretraining and the alternating adversarial training loop.
//!
//! Each outer iteration runs `K` adversary updates on fresh minibatches with
//! the classifier frozen, then one classifier update on
//! `E_λ = L_f − λ L_r` with the adversary frozen. The adversarial part of the
//! classifier gradient is obtained by backpropagating the adversary's
//! score-gradient through the classifier.
//!
//! Randomness is split into independent ChaCha streams derived from the
//! seed (data split, pretraining, classifier batches, adversary batches), so
//! the classifier's minibatch sequence does not depend on `K` or `λ`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{adversary_loss, AdversaryKind};
use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::loss::{output_loss, LossKind, Target};
use crate::nn::{Activation, DenseNet, GradientVector};
use crate::optim::{Direction, OptimizerKind, OptimizerState};

const STREAM_SPLIT: u64 = 1;
const STREAM_PRETRAIN: u64 = 2;
const STREAM_CLASSIFIER: u64 = 3;
const STREAM_ADVERSARY: u64 = 4;

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub minibatch_size: usize,
    pub adversary_steps: usize,
    pub iterations: usize,
    pub pretrain_epochs: usize,
    pub classifier_lr: f64,
    pub adversary_lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Restrict the adversary to samples with this label.
    pub conditional_on_y: Option<u8>,
    pub adversary_kind: AdversaryKind,
    /// Fraction of the data held out for the per-iteration metrics.
    pub eval_fraction: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 50.0,
            minibatch_size: 128,
            adversary_steps: 500,
            iterations: 200,
            pretrain_epochs: 20,
            classifier_lr: 1e-3,
            adversary_lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            conditional_on_y: None,
            adversary_kind: AdversaryKind::Mixture { components: 5 },
            eval_fraction: 0.1,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.minibatch_size == 0 || self.adversary_steps == 0 || self.iterations == 0 {
            return Err(Error::Config(
                "minibatch size, adversary steps and iterations must be >= 1".into(),
            ));
        }
        for (name, lr) in [
            ("classifier", self.classifier_lr),
            ("adversary", self.adversary_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} learning rate must be positive"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::Config("eval fraction must be in [0, 1)".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint interval must be >= 1".into()));
        }
        if matches!(self.conditional_on_y, Some(y) if y > 1) {
            return Err(Error::Config("conditional label must be 0 or 1".into()));
        }
        Ok(())
    }
}

/// Deterministic train / held-out partition of a dataset.
#[derive(Clone, Debug)]
pub struct DataSplit {
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
}

impl DataSplit {
    pub fn new(data: &[Sample], eval_fraction: f64, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        if data.len() == 1 || eval_fraction == 0.0 {
            return Ok(DataSplit {
                train: data.to_vec(),
                eval: data.to_vec(),
            });
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut stream(seed, STREAM_SPLIT));
        let n_eval =
            ((data.len() as f64 * eval_fraction).round() as usize).clamp(1, data.len() - 1);
        Ok(DataSplit {
            eval: idx[..n_eval].iter().map(|&i| data[i].clone()).collect(),
            train: idx[n_eval..].iter().map(|&i| data[i].clone()).collect(),
        })
    }
}

/// Indices eligible for minibatches, optionally restricted to one label.
#[derive(Clone, Debug)]
struct Pool(Vec<usize>);

impl Pool {
    fn new(data: &[Sample], label_filter: Option<u8>) -> Result<Self> {
        let idx: Vec<usize> = (0..data.len())
            .filter(|&i| label_filter.map_or(true, |y| data[i].y == y))
            .collect();
        if idx.is_empty() {
            return Err(Error::Config(match label_filter {
                Some(y) => format!("no samples with label {y} to draw from"),
                None => "no samples to draw from".into(),
            }));
        }
        Ok(Pool(idx))
    }

    fn draw<'a>(&self, data: &'a [Sample], m: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Sample> {
        (0..m)
            .map(|_| &data[self.0[rng.gen_range(0..self.0.len())]])
            .collect()
    }
}

/// `m` samples drawn i.i.d. with replacement.
pub fn sample_minibatch<'a>(
    data: &'a [Sample],
    m: usize,
    rng: &mut ChaCha8Rng,
    label_filter: Option<u8>,
) -> Result<Vec<&'a Sample>> {
    Ok(Pool::new(data, label_filter)?.draw(data, m, rng))
}

fn check_classifier(f: &DenseNet) -> Result<()> {
    if f.output_size() != 1 || f.output_activation() != Activation::Sigmoid {
        return Err(Error::Config(
            "classifier needs a single sigmoid output".into(),
        ));
    }
    Ok(())
}

/// Mean binary cross-entropy of `f` over `samples`.
pub fn classifier_loss(f: &DenseNet, samples: &[Sample]) -> Result<f64> {
    check_classifier(f)?;
    let mut total = 0.0;
    for s in samples {
        let trace = f.forward_trace(&s.x)?;
        total += output_loss(f, &trace, Target::Binary(s.y), LossKind::Bce)?.0;
    }
    Ok(total / samples.len() as f64)
}

pub fn accuracy(f: &DenseNet, samples: &[Sample]) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        let p = f.forward(&s.x)?[0];
        if (p > 0.5) == (s.y == 1) {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Mean adversary NLL of `z` given the classifier's score.
pub fn adversary_eval_loss(
    f: &DenseNet,
    r: &DenseNet,
    samples: &[Sample],
    kind: AdversaryKind,
) -> Result<f64> {
    let scores = samples
        .iter()
        .map(|s| Ok(f.forward(&s.x)?[0]))
        .collect::<Result<Vec<_>>>()?;
    let zs: Vec<f64> = samples.iter().map(|s| s.z).collect();
    adversary_nll(r, &scores, &zs, kind)
}

/// Mean NLL of an adversary on `(score, z)` pairs, without gradients.
pub fn adversary_nll(r: &DenseNet, scores: &[f64], zs: &[f64], kind: AdversaryKind) -> Result<f64> {
    kind.check(r)?;
    if scores.is_empty() || scores.len() != zs.len() {
        return Err(Error::InvalidInput(
            "adversary evaluation needs matching, non-empty inputs".into(),
        ));
    }
    let mut total = 0.0;
    for (&s, &z) in scores.iter().zip(zs) {
        let trace = r.forward_trace(&[s])?;
        let target = match kind {
            AdversaryKind::Mixture { .. } => Target::Real(z),
            AdversaryKind::Categorical { classes } => {
                Target::Category(crate::adversary::category_index(z, classes)?)
            }
        };
        let loss_kind = match kind {
            AdversaryKind::Mixture { .. } => LossKind::MdnNll,
            AdversaryKind::Categorical { .. } => LossKind::CatNll,
        };
        total += output_loss(r, &trace, target, loss_kind)?.0;
    }
    Ok(total / scores.len() as f64)
}

/// The adversary's contribution to the classifier objective.
#[derive(Clone, Copy, Debug)]
pub struct AdversaryTerm<'a> {
    pub net: &'a DenseNet,
    pub kind: AdversaryKind,
    pub lambda: f64,
    /// Only samples with this label enter `L_r`.
    pub label: Option<u8>,
}

/// `E = L_f − λ L_r` on `batch` and its gradient in the classifier's
/// parameters, with the adversary held fixed. `L_f` is the batch-mean
/// cross-entropy; `L_r` is the adversary NLL averaged over the samples that
/// pass the label filter. Without a term (or with `λ = 0`) this is `L_f`.
pub fn classifier_objective(
    f: &DenseNet,
    batch: &[&Sample],
    adversary: Option<AdversaryTerm<'_>>,
) -> Result<(f64, GradientVector)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let m = batch.len() as f64;
    let traces = batch
        .iter()
        .map(|s| f.forward_trace(&s.x))
        .collect::<Result<Vec<_>>>()?;
    let mut value = 0.0;
    // dE/dlogit for every sample: the bce part first
    let mut d_logit: Vec<f64> = Vec::with_capacity(batch.len());
    for (t, s) in traces.iter().zip(batch) {
        let (loss, d) = output_loss(f, t, Target::Binary(s.y), LossKind::Bce)?;
        value += loss / m;
        d_logit.push(d[0] / m);
    }

    if let Some(term) = adversary.filter(|a| a.lambda > 0.0) {
        let members: Vec<usize> = (0..batch.len())
            .filter(|&i| term.label.map_or(true, |y| batch[i].y == y))
            .collect();
        if !members.is_empty() {
            let scores: Vec<f64> = members.iter().map(|&i| traces[i].output()[0]).collect();
            let zs: Vec<f64> = members.iter().map(|&i| batch[i].z).collect();
            let adv = adversary_loss(term.net, &scores, &zs, term.kind)?;
            value -= term.lambda * adv.loss;
            for (j, &i) in members.iter().enumerate() {
                let s = scores[j];
                // chained through the output sigmoid
                d_logit[i] -= term.lambda * adv.score_grad[j] * s * (1.0 - s);
            }
        }
    }

    let mut grad = vec![0.0; f.params().len()];
    for (trace, d) in traces.iter().zip(&d_logit) {
        f.backward(trace, &[*d], &mut grad);
    }
    Ok((value, GradientVector::new(grad)?))
}

fn classifier_step(
    f: &mut DenseNet,
    opt: &mut OptimizerState,
    batch: &[&Sample],
    adversary: Option<AdversaryTerm<'_>>,
) -> Result<()> {
    let (_, grad) = classifier_objective(f, batch, adversary)?;
    opt.step(f, &grad, Direction::Descend)
}

/// One adversary update: ascend `E` in `θ_r`, i.e. descend the adversary NLL.
fn adversary_step(
    f: &DenseNet,
    r: &mut DenseNet,
    opt: &mut OptimizerState,
    batch: &[&Sample],
    kind: AdversaryKind,
) -> Result<f64> {
    let scores = batch
        .iter()
        .map(|s| Ok(f.forward(&s.x)?[0]))
        .collect::<Result<Vec<_>>>()?;
    let zs: Vec<f64> = batch.iter().map(|s| s.z).collect();
    let adv = adversary_loss(r, &scores, &zs, kind)?;
    let grad_e = GradientVector::new(adv.param_grad.values().iter().map(|g| -g).collect())?;
    opt.step(r, &grad_e, Direction::Ascend)?;
    Ok(adv.loss)
}

/// Trains `f` on cross-entropy alone for `pretrain_epochs` passes over the
/// training split, in shuffled minibatches. Returns the initial network if
/// training failed to lower the training loss.
pub fn pretrain_classifier(
    f: &DenseNet,
    data: &[Sample],
    config: &TrainConfig,
) -> Result<DenseNet> {
    config.validate()?;
    check_classifier(f)?;
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "pretraining needs labelled data".into(),
        ));
    }
    if config.pretrain_epochs == 0 {
        return Ok(f.clone());
    }
    let split = DataSplit::new(data, config.eval_fraction, config.seed)?;
    let train = &split.train;
    let initial_loss = classifier_loss(f, train)?;
    let mut net = f.clone();
    let mut opt = OptimizerState::new(config.optimizer, config.classifier_lr, net.params().len())?;
    let mut rng = stream(config.seed, STREAM_PRETRAIN);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for _ in 0..config.pretrain_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.minibatch_size) {
            step += 1;
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            classifier_step(&mut net, &mut opt, &batch, None).map_err(|e| Error::Training {
                iteration: step,
                source: Box::new(e),
            })?;
        }
    }
    let final_loss = classifier_loss(&net, train)?;
    if !final_loss.is_finite() {
        return Err(Error::Training {
            iteration: step,
            source: Box::new(Error::numerical(None, "pretraining loss is not finite")),
        });
    }
    Ok(if final_loss <= initial_loss {
        net
    } else {
        f.clone()
    })
}

/// Continues cross-entropy training for `config.iterations` minibatch steps,
/// drawing batches exactly as [`adversarial_train`] does for its classifier.
/// The returned metrics have `loss_r = NaN` and `e_lambda = loss_f`.
pub fn train_classifier_only(
    f: &DenseNet,
    data: &[Sample],
    config: &TrainConfig,
) -> Result<(DenseNet, RunMetrics)> {
    config.validate()?;
    check_classifier(f)?;
    let split = DataSplit::new(data, config.eval_fraction, config.seed)?;
    let pool = Pool::new(&split.train, None)?;
    let mut rng = stream(config.seed, STREAM_CLASSIFIER);
    let mut net = f.clone();
    let mut opt = OptimizerState::new(config.optimizer, config.classifier_lr, net.params().len())?;
    let mut metrics = RunMetrics::default();
    for t in 1..=config.iterations {
        let batch = pool.draw(&split.train, config.minibatch_size, &mut rng);
        let loss_f = classifier_step(&mut net, &mut opt, &batch, None)
            .and_then(|_| classifier_loss(&net, &split.eval))
            .map_err(|e| Error::Training {
                iteration: t,
                source: Box::new(e),
            })?;
        metrics.records.push(IterationRecord {
            iteration: t,
            loss_f,
            loss_r: f64::NAN,
            e_lambda: loss_f,
        });
        if t % config.checkpoint_every == 0 || t == config.iterations {
            metrics.evaluations.push(EvalRecord {
                iteration: t,
                accuracy: accuracy(&net, &split.eval)?,
                pivotality: None,
            });
        }
    }
    Ok((net, metrics))
}

/// Fits an adversary to fixed `(score, z)` pairs with minibatch steps.
#[allow(clippy::too_many_arguments)]
pub fn fit_adversary(
    r: &DenseNet,
    scores: &[f64],
    zs: &[f64],
    kind: AdversaryKind,
    steps: usize,
    minibatch_size: usize,
    optimizer: OptimizerKind,
    learning_rate: f64,
    seed: u64,
) -> Result<DenseNet> {
    kind.check(r)?;
    if scores.is_empty() || scores.len() != zs.len() {
        return Err(Error::InvalidInput(
            "adversary fit needs matching, non-empty inputs".into(),
        ));
    }
    let mut net = r.clone();
    let mut opt = OptimizerState::new(optimizer, learning_rate, net.params().len())?;
    let mut rng = stream(seed, STREAM_ADVERSARY);
    for step in 1..=steps {
        let idx: Vec<usize> = (0..minibatch_size)
            .map(|_| rng.gen_range(0..scores.len()))
            .collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let z: Vec<f64> = idx.iter().map(|&i| zs[i]).collect();
        let adv = adversary_loss(&net, &s, &z, kind).map_err(|e| Error::Training {
            iteration: step,
            source: Box::new(e),
        })?;
        opt.step(&mut net, &adv.param_grad, Direction::Descend)?;
    }
    Ok(net)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss_f: f64,
    pub loss_r: f64,
    pub e_lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub accuracy: f64,
    /// Filled in by callers that can draw at fixed nuisance values.
    pub pivotality: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub records: Vec<IterationRecord>,
    pub evaluations: Vec<EvalRecord>,
}

impl RunMetrics {
    /// `iteration,loss_f,loss_r,e_lambda`, one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss_f,loss_r,e_lambda\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{:?},{:?},{:?}\n",
                r.iteration, r.loss_f, r.loss_r, r.e_lambda
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("iteration,loss_f,loss_r,e_lambda") {
            return Err(Error::Schema(
                "metrics header must be iteration,loss_f,loss_r,e_lambda".into(),
            ));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i as u64 + 2;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::Parse {
                    line: line_no,
                    detail: "expected 4 columns".into(),
                });
            }
            let num = |s: &str| {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    detail: e.to_string(),
                })
            };
            records.push(IterationRecord {
                iteration: cols[0].trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    detail: "bad iteration".into(),
                })?,
                loss_f: num(cols[1])?,
                loss_r: num(cols[2])?,
                e_lambda: num(cols[3])?,
            });
        }
        Ok(RunMetrics {
            records,
            evaluations: Vec::new(),
        })
    }
}

/// Both networks at the end of an outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub classifier: DenseNet,
    pub adversary: DenseNet,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub classifier: DenseNet,
    pub adversary: DenseNet,
    pub metrics: RunMetrics,
    /// Every `checkpoint_every` iterations, plus the final one.
    pub snapshots: Vec<Snapshot>,
}

/// A training run that stopped on a numerical failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: Option<Snapshot>,
    pub metrics: RunMetrics,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for TrainFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<TrainFailure> for Error {
    fn from(failure: TrainFailure) -> Self {
        failure.error
    }
}

/// Runs the alternating minimax loop starting from `f` and `r`.
pub fn adversarial_train(
    f: &DenseNet,
    r: &DenseNet,
    data: &[Sample],
    config: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainFailure> {
    let setup_failure = |error| TrainFailure {
        error,
        last_good: None,
        metrics: RunMetrics::default(),
    };
    config.validate().map_err(setup_failure)?;
    check_classifier(f).map_err(setup_failure)?;
    config.adversary_kind.check(r).map_err(setup_failure)?;
    let split = DataSplit::new(data, config.eval_fraction, config.seed).map_err(setup_failure)?;
    let classifier_pool = Pool::new(&split.train, None).map_err(setup_failure)?;
    let adversary_pool = Pool::new(&split.train, config.conditional_on_y).map_err(setup_failure)?;
    let adversary_eval: Vec<Sample> = split
        .eval
        .iter()
        .filter(|s| config.conditional_on_y.map_or(true, |y| s.y == y))
        .cloned()
        .collect();
    let adversary_eval = if adversary_eval.is_empty() {
        adversary_pool
            .0
            .iter()
            .map(|&i| split.train[i].clone())
            .collect()
    } else {
        adversary_eval
    };

    let mut f = f.clone();
    let mut r = r.clone();
    let mut f_opt = OptimizerState::new(config.optimizer, config.classifier_lr, f.params().len())
        .map_err(setup_failure)?;
    let mut r_opt = OptimizerState::new(config.optimizer, config.adversary_lr, r.params().len())
        .map_err(setup_failure)?;
    let mut classifier_rng = stream(config.seed, STREAM_CLASSIFIER);
    let mut adversary_rng = stream(config.seed, STREAM_ADVERSARY);
    let kind = config.adversary_kind;

    let mut metrics = RunMetrics::default();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut last_good = Some(Snapshot {
        iteration: 0,
        classifier: f.clone(),
        adversary: r.clone(),
    });

    for t in 1..=config.iterations {
        let result = (|| -> Result<IterationRecord> {
            for _ in 0..config.adversary_steps {
                let batch =
                    adversary_pool.draw(&split.train, config.minibatch_size, &mut adversary_rng);
                adversary_step(&f, &mut r, &mut r_opt, &batch, kind)?;
            }
            let batch =
                classifier_pool.draw(&split.train, config.minibatch_size, &mut classifier_rng);
            classifier_step(
                &mut f,
                &mut f_opt,
                &batch,
                Some(AdversaryTerm {
                    net: &r,
                    kind,
                    lambda: config.lambda,
                    label: config.conditional_on_y,
                }),
            )?;

            let loss_f = classifier_loss(&f, &split.eval)?;
            let loss_r = adversary_eval_loss(&f, &r, &adversary_eval, kind)?;
            let record = IterationRecord {
                iteration: t,
                loss_f,
                loss_r,
                e_lambda: loss_f - config.lambda * loss_r,
            };
            if !(record.loss_f.is_finite()
                && record.loss_r.is_finite()
                && record.e_lambda.is_finite())
            {
                return Err(Error::numerical(None, "non-finite training metrics"));
            }
            Ok(record)
        })();

        let record = match result {
            Ok(record) => record,
            Err(e) => {
                return Err(TrainFailure {
                    error: Error::Training {
                        iteration: t,
                        source: Box::new(e),
                    },
                    last_good,
                    metrics,
                })
            }
        };
        metrics.records.push(record);

        if t % config.checkpoint_every == 0 || t == config.iterations {
            let snapshot = Snapshot {
                iteration: t,
                classifier: f.clone(),
                adversary: r.clone(),
            };
            let acc = accuracy(&f, &split.eval).unwrap_or(f64::NAN);
            metrics.evaluations.push(EvalRecord {
                iteration: t,
                accuracy: acc,
                pivotality: None,
            });
            last_good = Some(snapshot.clone());
            snapshots.push(snapshot);
        }
    }

    Ok(TrainOutcome {
        classifier: f,
        adversary: r,
        metrics,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_toy, ToySpec};
    use Activation::*;

    fn toy_nets(seed: u64) -> (DenseNet, DenseNet) {
        (
            DenseNet::init(vec![2, 8, 1], vec![Tanh, Sigmoid], seed).unwrap(),
            DenseNet::init(vec![1, 8, 6], vec![Relu, Linear], seed + 1).unwrap(),
        )
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            lambda: 5.0,
            minibatch_size: 32,
            adversary_steps: 3,
            iterations: 12,
            pretrain_epochs: 2,
            adversary_kind: AdversaryKind::Mixture { components: 2 },
            checkpoint_every: 5,
            ..Default::default()
        }
    }

    #[test]
    fn minibatches_are_deterministic_and_filtered() {
        let data = generate_toy(&ToySpec::new(50, 1)).unwrap();
        let a = sample_minibatch(&data, 20, &mut stream(9, 1), None).unwrap();
        let b = sample_minibatch(&data, 20, &mut stream(9, 1), None).unwrap();
        assert_eq!(a, b);
        let zeros = sample_minibatch(&data, 200, &mut stream(9, 1), Some(0)).unwrap();
        assert_eq!(zeros.len(), 200);
        assert!(zeros.iter().all(|s| s.y == 0));
        let ones: Vec<Sample> = data.iter().filter(|s| s.y == 1).cloned().collect();
        assert!(matches!(
            sample_minibatch(&ones, 4, &mut stream(9, 1), Some(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_epochs_leaves_params_unchanged() {
        let data = generate_toy(&ToySpec::new(100, 2)).unwrap();
        let (f, _) = toy_nets(3);
        let config = TrainConfig {
            pretrain_epochs: 0,
            ..small_config()
        };
        assert_eq!(pretrain_classifier(&f, &data, &config).unwrap(), f);
    }

    #[test]
    fn pretraining_does_not_increase_loss() {
        let data = generate_toy(&ToySpec::new(500, 2)).unwrap();
        let (f, _) = toy_nets(3);
        let trained = pretrain_classifier(&f, &data, &small_config()).unwrap();
        let split = DataSplit::new(&data, 0.1, 0).unwrap();
        assert!(
            classifier_loss(&trained, &split.train).unwrap()
                <= classifier_loss(&f, &split.train).unwrap()
        );
    }

    #[test]
    fn records_and_snapshots() {
        let data = generate_toy(&ToySpec::new(400, 4)).unwrap();
        let (f, r) = toy_nets(5);
        let config = small_config();
        let out = adversarial_train(&f, &r, &data, &config).unwrap();
        assert_eq!(out.metrics.records.len(), 12);
        for rec in &out.metrics.records {
            assert!((rec.e_lambda - (rec.loss_f - config.lambda * rec.loss_r)).abs() <= 1e-12);
        }
        let iters: Vec<usize> = out.snapshots.iter().map(|s| s.iteration).collect();
        assert_eq!(iters, vec![5, 10, 12]);
        assert_eq!(out.snapshots.last().unwrap().classifier, out.classifier);
    }

    #[test]
    fn lambda_zero_matches_classifier_only_training() {
        let data = generate_toy(&ToySpec::new(300, 6)).unwrap();
        let (f, r) = toy_nets(7);
        let config = TrainConfig {
            lambda: 0.0,
            ..small_config()
        };
        let adv = adversarial_train(&f, &r, &data, &config).unwrap();
        let (plain, _) = train_classifier_only(&f, &data, &config).unwrap();
        let bits = |n: &DenseNet| n.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&adv.classifier), bits(&plain));
        assert_ne!(adv.adversary, r);
    }

    #[test]
    fn rejects_incompatible_networks() {
        let data = generate_toy(&ToySpec::new(50, 1)).unwrap();
        let (f, r) = toy_nets(1);
        let bad_r = DenseNet::init(vec![2, 4, 6], vec![Relu, Linear], 0).unwrap();
        assert!(matches!(
            adversarial_train(&f, &bad_r, &data, &small_config()),
            Err(TrainFailure {
                error: Error::Config(_),
                ..
            })
        ));
        let bad_f = DenseNet::init(vec![2, 4, 1], vec![Relu, Linear], 0).unwrap();
        assert!(adversarial_train(&bad_f, &r, &data, &small_config()).is_err());
        let config = TrainConfig {
            minibatch_size: 0,
            ..small_config()
        };
        assert!(adversarial_train(&f, &r, &data, &config).is_err());
    }

    #[test]
    fn numerical_failure_keeps_last_good_snapshot() {
        let data = generate_toy(&ToySpec::new(200, 1)).unwrap();
        let (f, r) = toy_nets(2);
        // an absurd adversary step size blows the mixture up quickly
        let config = TrainConfig {
            adversary_lr: 1e200,
            optimizer: OptimizerKind::Sgd,
            ..small_config()
        };
        let failure = adversarial_train(&f, &r, &data, &config).unwrap_err();
        assert!(matches!(failure.error, Error::Training { .. }));
        let last = failure
            .last_good
            .expect("initial state is always a good snapshot");
        assert!(last.classifier.params().iter().all(|p| p.is_finite()));
        assert!(last.adversary.params().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn metrics_csv_round_trip() {
        let metrics = RunMetrics {
            records: vec![
                IterationRecord {
                    iteration: 1,
                    loss_f: 0.1 + 0.2,
                    loss_r: 1.4189385332046727,
                    e_lambda: -70.6,
                },
                IterationRecord {
                    iteration: 2,
                    loss_f: 1e-9,
                    loss_r: 2.0,
                    e_lambda: -100.0,
                },
            ],
            evaluations: vec![],
        };
        assert_eq!(RunMetrics::parse_csv(&metrics.to_csv()).unwrap(), metrics);
        assert!(RunMetrics::parse_csv("iter,a\n").is_err());
    }

    #[test]
    fn conditional_mode_only_shows_one_class_to_the_adversary() {
        // give class-1 samples a z the categorical adversary cannot index:
        // any leak into adversary batches or evaluation would be an error
        let mut data = generate_toy(&ToySpec::new(300, 8)).unwrap();
        for s in &mut data {
            s.z = if s.y == 1 {
                7.0
            } else {
                f64::from(s.x[0] > 0.0)
            };
        }
        let f = DenseNet::init(vec![2, 8, 1], vec![Tanh, Sigmoid], 1).unwrap();
        let r = DenseNet::init(vec![1, 8, 2], vec![Relu, Softmax], 2).unwrap();
        let config = TrainConfig {
            adversary_kind: AdversaryKind::Categorical { classes: 2 },
            conditional_on_y: Some(0),
            ..small_config()
        };
        adversarial_train(&f, &r, &data, &config).unwrap();
        let unconditional = TrainConfig {
            conditional_on_y: None,
            ..config
        };
        assert!(adversarial_train(&f, &r, &data, &unconditional).is_err());
    }
}

//! The `pivotal` command line: `generate`, `train`, `sweep` and `report`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O or file
//! format error, 4 training failure, 5 evaluation failure.
//!
//! Configuration precedence, lowest first: built-in defaults (with the
//! surrogate preset applied when the dataset's manifest says it came from
//! the surrogate generator), then `--config FILE`, then individual flags.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::adversary::AdversaryKind;
use crate::checkpoint::Checkpoint;
use crate::datagen::{read_dataset, write_dataset, GeneratorSpec, Sample, SurrogateSpec, ToySpec};
use crate::error::{Error, Result};
use crate::eval::estimate_h_y_given_x;
use crate::experiment::{
    self, members_csv, pooled_std, select_interior, summarize, summary_csv, Evaluation, ModelSpec,
    RunConfig, SweepPlan, MEMBERS_HEADER, SUMMARY_HEADER,
};
use crate::manifest::{
    fingerprint, DatasetManifest, DatasetRecord, MetricFile, RunManifest, TOOL, VERSION,
};
use crate::plot::{LinePlot, ReferenceLine, Series};
use crate::train::RunMetrics;

/// Default output directory for `train` and `sweep` when `--out` is absent.
pub const RUN_DIR_ENV: &str = "PIVOTAL_RUN_DIR";

pub const METRICS_HEADER: &str = "iteration,loss_f,loss_r,e_lambda";
pub const EVALUATIONS_HEADER: &str = "iteration,accuracy";
pub const DENSITIES_HEADER: &str = "z,bin_lo,bin_hi,mass";
pub const KS_HEADER: &str = "z_a,z_b,ks";
pub const AMS_HEADER: &str = "threshold,signal,background,background_sigma,ams";

#[derive(Debug, Parser)]
#[command(
    name = "pivotal",
    version,
    about = "Train classifiers whose scores are pivotal in a nuisance parameter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its manifest.
    #[command(subcommand)]
    Generate(Generate),
    /// Pretrain, then train adversarially, then evaluate.
    Train(TrainArgs),
    /// Repeat training over several λ values and seeds.
    Sweep(SweepArgs),
    /// Draw SVG plots for finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum Generate {
    /// Two 2D Gaussian classes; class 1 moves with a Gaussian nuisance.
    Toy(ToyArgs),
    /// Eight-feature stand-in for a collider dataset with binary pileup.
    Surrogate(SurrogateArgs),
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    <[f64; 2]>::try_from(v).map_err(|_| "expected two comma-separated numbers".into())
}

fn parse_matrix(s: &str) -> std::result::Result<[[f64; 2]; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [a, b, c, d] => Ok([[a, b], [c, d]]),
        _ => Err("expected four comma-separated numbers, row-major".into()),
    }
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub z_sigma: f64,
    /// How strongly `z` moves class 1 along the second axis.
    #[arg(long, default_value_t = 1.0)]
    pub coupling: f64,
    #[arg(long, value_parser = parse_pair, default_value = "0,0")]
    pub class0_mean: [f64; 2],
    #[arg(long, value_parser = parse_matrix, default_value = "1,-0.5,-0.5,1")]
    pub class0_cov: [[f64; 2]; 2],
    #[arg(long, value_parser = parse_pair, default_value = "1,1")]
    pub class1_mean: [f64; 2],
    #[arg(long, value_parser = parse_matrix, default_value = "1,0,0,1")]
    pub class1_cov: [[f64; 2]; 2],
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurrogateArgs {
    #[arg(long, default_value_t = 20_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub pileup_shift: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pileup_noise: f64,
    #[arg(long, default_value_t = 0.35)]
    pub robust_shift: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sensitive_shift: f64,
    #[arg(long, default_value_t = 0.5)]
    pub signal_fraction: f64,
    #[arg(long, default_value_t = 100.0)]
    pub s_total: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub b_total: f64,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Every run-config key as an optional flag.
#[derive(Debug, Args, Default)]
pub struct ConfigFlags {
    /// Flat `key = value` config file; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long = "M", visible_alias = "minibatch-size")]
    pub minibatch_size: Option<String>,
    #[arg(long = "K", visible_alias = "adversary-steps")]
    pub adversary_steps: Option<String>,
    #[arg(long = "T", visible_alias = "iterations")]
    pub iterations: Option<String>,
    #[arg(long)]
    pub pretrain_epochs: Option<String>,
    #[arg(long)]
    pub classifier_lr: Option<String>,
    #[arg(long)]
    pub adversary_lr: Option<String>,
    /// `adam` or `sgd`.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Train the adversary on this class only (`0`, `1` or `none`).
    #[arg(long)]
    pub conditional_y: Option<String>,
    /// `mixture:C` or `categorical:N`.
    #[arg(long)]
    pub adversary: Option<String>,
    #[arg(long)]
    pub eval_fraction: Option<String>,
    #[arg(long)]
    pub checkpoint_every: Option<String>,
    /// Comma-separated hidden layer sizes.
    #[arg(long)]
    pub classifier_hidden: Option<String>,
    #[arg(long)]
    pub classifier_activations: Option<String>,
    #[arg(long)]
    pub adversary_hidden: Option<String>,
    #[arg(long)]
    pub adversary_activations: Option<String>,
    /// Continue plain cross-entropy training instead of adversarial training.
    #[arg(long)]
    pub no_adversary: bool,
    #[arg(long)]
    pub density_samples: Option<String>,
    #[arg(long)]
    pub ams_thresholds: Option<String>,
    /// `none` or `nuisance-spread`.
    #[arg(long)]
    pub systematics: Option<String>,
}

impl ConfigFlags {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs: [(&'static str, &Option<String>); 20] = [
            ("lambda", &self.lambda),
            ("minibatch_size", &self.minibatch_size),
            ("adversary_steps", &self.adversary_steps),
            ("iterations", &self.iterations),
            ("pretrain_epochs", &self.pretrain_epochs),
            ("classifier_lr", &self.classifier_lr),
            ("adversary_lr", &self.adversary_lr),
            ("optimizer", &self.optimizer),
            ("seed", &self.seed),
            ("conditional_y", &self.conditional_y),
            ("adversary", &self.adversary),
            ("eval_fraction", &self.eval_fraction),
            ("checkpoint_every", &self.checkpoint_every),
            ("classifier_hidden", &self.classifier_hidden),
            ("classifier_activations", &self.classifier_activations),
            ("adversary_hidden", &self.adversary_hidden),
            ("adversary_activations", &self.adversary_activations),
            ("density_samples", &self.density_samples),
            ("ams_thresholds", &self.ams_thresholds),
            ("systematics", &self.systematics),
        ];
        let mut out: Vec<(&'static str, String)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.no_adversary {
            out.push(("adversarial", "false".into()));
        }
        out
    }

    /// Defaults, then the preset for `generator`, then the file, then flags.
    pub fn resolve(&self, generator: Option<&GeneratorSpec>) -> Result<RunConfig> {
        let mut config = match generator {
            Some(GeneratorSpec::Surrogate(_)) => surrogate_preset(),
            _ => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            config
                .apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for (key, value) in self.overrides() {
            config.set(key, &value)?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Defaults for the surrogate dataset: deeper networks, a two-class
/// adversary trained on background only, and a short inner loop.
pub fn surrogate_preset() -> RunConfig {
    let mut config = RunConfig {
        model: ModelSpec::deep(32),
        ..RunConfig::default()
    };
    config.train.adversary_kind = AdversaryKind::Categorical { classes: 2 };
    config.train.conditional_on_y = Some(0);
    config.train.adversary_steps = 10;
    config
}

fn default_out(out: &Option<PathBuf>, fallback: &str) -> PathBuf {
    out.clone()
        .or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(fallback))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory; defaults to `$PIVOTAL_RUN_DIR`, then `pivotal-run`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Weighted test set for the AMS scan. Surrogate datasets get a fresh
    /// draw from their generator when this is absent.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Size of a generated test set.
    #[arg(long, default_value_t = 200_000)]
    pub test_n: usize,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; defaults to `$PIVOTAL_RUN_DIR`, then `pivotal-sweep`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Set used to choose the interior λ.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Size of generated validation and test sets.
    #[arg(long, default_value_t = 200_000)]
    pub test_n: usize,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidInput(_) | Error::Config(_) | Error::DimensionMismatch { .. } => 2,
        Error::Io { .. } | Error::Parse { .. } | Error::Schema(_) => 3,
        Error::Training { .. } | Error::Numerical { .. } => 4,
        Error::Evaluation(_) => 5,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(g) => cmd_generate(g),
        Command::Train(t) => cmd_train(t),
        Command::Sweep(s) => cmd_sweep(s),
        Command::Report(r) => cmd_report(r),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_generate(g: Generate) -> Result<()> {
    let (generator, out) = match g {
        Generate::Toy(a) => (
            GeneratorSpec::Toy(ToySpec {
                n: a.n as usize,
                z_prior_sigma: a.z_sigma,
                seed: a.seed,
                class0_mean: a.class0_mean,
                class0_cov: a.class0_cov,
                class1_mean: a.class1_mean,
                class1_cov: a.class1_cov,
                nuisance_coupling: a.coupling,
            }),
            a.out,
        ),
        Generate::Surrogate(a) => (
            GeneratorSpec::Surrogate(SurrogateSpec {
                n: a.n as usize,
                signal_fraction: a.signal_fraction,
                pileup_shift: a.pileup_shift,
                pileup_noise: a.pileup_noise,
                robust_signal_shift: a.robust_shift,
                sensitive_signal_shift: a.sensitive_shift,
                s_total: a.s_total,
                b_total: a.b_total,
                seed: a.seed,
            }),
            a.out,
        ),
    };
    let samples = generator.generate()?;
    ensure_parent(&out)?;
    write_dataset(&samples, &out)?;
    let manifest = DatasetManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        generator,
        sha256: fingerprint(&out)?,
        rows: samples.len(),
    };
    manifest.write_for(&out)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(Vec<Sample>, Option<GeneratorSpec>, DatasetRecord)> {
    let samples = read_dataset(path)?;
    let generator = DatasetManifest::read_for(path)?.map(|m| m.generator);
    let record = DatasetRecord {
        role: "train".into(),
        path: fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
        sha256: fingerprint(path)?,
        rows: samples.len(),
    };
    Ok((samples, generator, record))
}

fn config_map(config: &RunConfig) -> std::collections::BTreeMap<String, String> {
    experiment::CONFIG_KEYS
        .iter()
        .map(|k| (k.to_string(), config.get(k).expect("listed key")))
        .collect()
}

pub fn densities_csv(eval: &Evaluation) -> Option<String> {
    let p = eval.pivotality.as_ref()?;
    let mut out = format!("{DENSITIES_HEADER}\n");
    for d in &p.densities {
        for (i, m) in d.bin_masses.iter().enumerate() {
            writeln!(
                out,
                "{:?},{:?},{:?},{:?}",
                d.z_value,
                d.bin_edges[i],
                d.bin_edges[i + 1],
                m
            )
            .unwrap();
        }
    }
    Some(out)
}

pub fn ks_csv(eval: &Evaluation) -> Option<String> {
    let p = eval.pivotality.as_ref()?;
    let mut out = format!("{KS_HEADER}\n");
    for pair in &p.pairs {
        writeln!(out, "{:?},{:?},{:?}", pair.z_a, pair.z_b, pair.ks).unwrap();
    }
    Some(out)
}

pub fn ams_csv(eval: &Evaluation) -> Option<String> {
    let a = eval.ams.as_ref()?;
    let mut out = format!("{AMS_HEADER}\n");
    for i in 0..a.thresholds.len() {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{}",
            a.thresholds[i],
            a.signal[i],
            a.background[i],
            a.background_sigma[i],
            a.ams_values[i].map_or(String::new(), |v| format!("{v:?}"))
        )
        .unwrap();
    }
    Some(out)
}

fn evaluations_csv(metrics: &RunMetrics) -> String {
    let mut out = format!("{EVALUATIONS_HEADER}\n");
    for e in &metrics.evaluations {
        writeln!(out, "{},{:?}", e.iteration, e.accuracy).unwrap();
    }
    out
}

/// The AMS set for a run: an explicit file, a fresh surrogate draw, or none.
fn ams_set(
    test: &Option<PathBuf>,
    test_n: usize,
    generator: Option<&GeneratorSpec>,
    manifest: &mut RunManifest,
) -> Result<Option<Vec<Sample>>> {
    if let Some(path) = test {
        let samples = read_dataset(path)?;
        manifest.datasets.push(DatasetRecord {
            role: "test".into(),
            path: fs::canonicalize(path).unwrap_or_else(|_| path.clone()),
            sha256: fingerprint(path)?,
            rows: samples.len(),
        });
        return Ok(Some(samples));
    }
    match generator {
        Some(g) if g.has_weights() => Ok(Some(experiment::reference_sets(g, test_n)?.1)),
        _ => {
            manifest
                .notices
                .push("no weighted test set; AMS scan skipped".into());
            Ok(None)
        }
    }
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let (data, generator, record) = load_dataset(&args.data)?;
    let config = args.flags.resolve(generator.as_ref())?;
    let dir = default_out(&args.out, "pivotal-run");
    for sub in ["checkpoints", "report"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    write_file(&dir.join("config.txt"), &config.to_text())?;

    let mut manifest = RunManifest::new("train");
    manifest.config = config_map(&config);
    manifest.class_conditional = config.train.conditional_on_y;
    manifest.datasets.push(record);
    manifest.generator = generator.clone();
    manifest
        .timings
        .insert("load".into(), started.elapsed().as_secs_f64());

    let train_start = Instant::now();
    let outcome = experiment::run(&data, &config);
    manifest
        .timings
        .insert("train".into(), train_start.elapsed().as_secs_f64());

    let save = |name: String, ck: Checkpoint, manifest: &mut RunManifest| -> Result<()> {
        let rel = PathBuf::from("checkpoints").join(name);
        ck.write(dir.join(&rel))?;
        manifest.checkpoints.push(rel);
        Ok(())
    };
    let kind = config.train.adversary_kind;
    let (result, failure) = match outcome {
        Ok(result) => (Some(result), None),
        Err(failure) => (None, Some(failure)),
    };
    let metrics = match (&result, &failure) {
        (Some(r), _) => r.metrics.clone(),
        (_, Some(f)) => f.metrics.clone(),
        _ => unreachable!(),
    };
    write_file(&dir.join("metrics.csv"), &metrics.to_csv())?;
    write_file(&dir.join("evaluations.csv"), &evaluations_csv(&metrics))?;
    manifest.metrics.push(MetricFile {
        path: "metrics.csv".into(),
        schema: METRICS_HEADER.into(),
    });
    manifest.metrics.push(MetricFile {
        path: "evaluations.csv".into(),
        schema: EVALUATIONS_HEADER.into(),
    });

    if let Some(failure) = failure {
        if let Some(f) = &failure.pretrained {
            save(
                "pretrained.ckpt".into(),
                Checkpoint::classifier(f.clone()),
                &mut manifest,
            )?;
        }
        if let Some(s) = &failure.last_good {
            save(
                format!("classifier-{:06}.ckpt", s.iteration),
                Checkpoint::classifier(s.classifier.clone()),
                &mut manifest,
            )?;
            save(
                format!("adversary-{:06}.ckpt", s.iteration),
                Checkpoint::adversary(s.adversary.clone(), kind),
                &mut manifest,
            )?;
        }
        manifest.status = "failed".into();
        manifest.error = Some(failure.error.to_string());
        manifest.write(&dir)?;
        return Err(failure.error);
    }
    let result = result.expect("no failure");
    save(
        "pretrained.ckpt".into(),
        Checkpoint::classifier(result.pretrained.clone()),
        &mut manifest,
    )?;
    for s in &result.snapshots {
        save(
            format!("classifier-{:06}.ckpt", s.iteration),
            Checkpoint::classifier(s.classifier.clone()),
            &mut manifest,
        )?;
        save(
            format!("adversary-{:06}.ckpt", s.iteration),
            Checkpoint::adversary(s.adversary.clone(), kind),
            &mut manifest,
        )?;
    }
    save(
        "classifier.ckpt".into(),
        Checkpoint::classifier(result.classifier.clone()),
        &mut manifest,
    )?;
    if let Some(r) = &result.adversary {
        save(
            "adversary.ckpt".into(),
            Checkpoint::adversary(r.clone(), kind),
            &mut manifest,
        )?;
    }

    let eval_start = Instant::now();
    let evaluation = (|| -> Result<Evaluation> {
        let test = ams_set(&args.test, args.test_n, generator.as_ref(), &mut manifest)?;
        if generator.is_none() {
            manifest
                .notices
                .push("dataset has no generator manifest; conditional densities skipped".into());
        }
        experiment::evaluate(
            &result.classifier,
            &experiment::held_out(&data, &config)?,
            generator.as_ref(),
            test.as_deref(),
            &config,
        )
    })();
    manifest
        .timings
        .insert("evaluate".into(), eval_start.elapsed().as_secs_f64());
    let evaluation = match evaluation {
        Ok(e) => e,
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            manifest.write(&dir)?;
            return Err(match e {
                Error::Io { .. } | Error::Parse { .. } | Error::Schema(_) => e,
                other => Error::Evaluation(other.to_string()),
            });
        }
    };
    let report = dir.join("report");
    for (name, header, text) in [
        (
            "densities.csv",
            DENSITIES_HEADER,
            densities_csv(&evaluation),
        ),
        ("ks.csv", KS_HEADER, ks_csv(&evaluation)),
        ("ams.csv", AMS_HEADER, ams_csv(&evaluation)),
    ] {
        if let Some(text) = text {
            write_file(&report.join(name), &text)?;
            manifest.metrics.push(MetricFile {
                path: PathBuf::from("report").join(name),
                schema: header.into(),
            });
        }
    }
    let summary = evaluation.summary_text();
    write_file(&report.join("summary.txt"), &summary)?;
    manifest
        .timings
        .insert("total".into(), started.elapsed().as_secs_f64());
    manifest.write(&dir)?;
    print!("{summary}");
    println!("run written to {}", dir.display());
    Ok(())
}

pub fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let started = Instant::now();
    let (data, generator, record) = load_dataset(&args.data)?;
    let config = args.flags.resolve(generator.as_ref())?;
    let dir = default_out(&args.out, "pivotal-sweep");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_file(&dir.join("config.txt"), &config.to_text())?;

    let mut manifest = RunManifest::new("sweep");
    manifest.config = config_map(&config);
    manifest.config.insert(
        "lambdas".into(),
        args.lambdas
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest
        .config
        .insert("repeats".into(), args.repeats.to_string());
    manifest.class_conditional = config.train.conditional_on_y;
    manifest.datasets.push(record);
    manifest.generator = generator.clone();

    let (validation, test) = match (&args.validation, &args.test, &generator) {
        (Some(v), Some(t), _) => (read_dataset(v)?, read_dataset(t)?),
        (None, None, Some(g)) if g.has_weights() => experiment::reference_sets(g, args.test_n)?,
        _ => {
            let held = experiment::held_out(&data, &config)?;
            manifest
                .notices
                .push("no separate validation/test sets; both use the held-out split".into());
            (held.clone(), held)
        }
    };
    let plan = SweepPlan {
        lambdas: args.lambdas.clone(),
        repeats: args.repeats,
        jobs: args.jobs,
    };
    let members = experiment::run_sweep(
        &data,
        &config,
        &plan,
        generator.as_ref(),
        &validation,
        &test,
    )?;
    manifest
        .timings
        .insert("sweep".into(), started.elapsed().as_secs_f64());
    let rows = summarize(&members);
    write_file(&dir.join("members.csv"), &members_csv(&members))?;
    write_file(&dir.join("summary.csv"), &summary_csv(&rows))?;
    manifest.metrics.push(MetricFile {
        path: "members.csv".into(),
        schema: MEMBERS_HEADER.into(),
    });
    manifest.metrics.push(MetricFile {
        path: "summary.csv".into(),
        schema: SUMMARY_HEADER.into(),
    });

    let mut text = String::new();
    writeln!(
        text,
        "{:>10} {:>5} {:>7} {:>16} {:>16} {:>9}",
        "lambda", "runs", "failed", "best_ams", "max_ks", "accuracy"
    )
    .unwrap();
    for r in &rows {
        writeln!(
            text,
            "{:>10} {:>5} {:>7} {:>8.4} ± {:<6.4} {:>7.4} ± {:<6.4} {:>9.4}",
            r.lambda,
            r.runs,
            r.failures,
            r.mean_best_ams,
            r.std_best_ams,
            r.mean_max_ks,
            r.std_max_ks,
            r.mean_accuracy
        )
        .unwrap();
    }
    if let Some(interior) = select_interior(&rows) {
        writeln!(
            text,
            "interior lambda chosen by validation = {}",
            interior.lambda
        )
        .unwrap();
        if let Some(first) = rows.first() {
            writeln!(
                text,
                "gain over lambda {} = {:.4} (pooled std {:.4})",
                first.lambda,
                interior.mean_best_ams - first.mean_best_ams,
                pooled_std(interior.std_best_ams, first.std_best_ams)
            )
            .unwrap();
        }
    }
    write_file(&dir.join("summary.txt"), &text)?;
    manifest.write(&dir)?;
    print!("{text}");
    let failed = members.iter().filter(|m| m.outcome.is_err()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} sweep members failed; see members.csv",
            members.len()
        );
    }
    if failed == members.len() {
        return Err(Error::Training {
            iteration: 0,
            source: Box::new(Error::Evaluation("every sweep member failed".into())),
        });
    }
    Ok(())
}

fn read_table(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    rdr.records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::Parse {
                    line: e.position().map_or(0, |p| p.line()),
                    detail: format!("{}: {e}", path.display()),
                })
        })
        .collect()
}

fn num(s: &str) -> f64 {
    s.trim().parse().unwrap_or(f64::NAN)
}

/// Writes `report/training.svg`, `report/densities.svg` and, when the run
/// has an AMS scan, `report/ams.svg`. Returns notices for skipped plots.
pub fn report_run(dir: &Path) -> Result<Vec<String>> {
    let name = dir.display().to_string();
    let manifest = RunManifest::read(dir).map_err(|e| Error::Schema(format!("run {name}: {e}")))?;
    let metrics_path = dir.join("metrics.csv");
    let metrics_text = fs::read_to_string(&metrics_path).map_err(|e| {
        Error::Schema(format!(
            "run {name}: cannot read metrics file {}: {e}",
            metrics_path.display()
        ))
    })?;
    let metrics = RunMetrics::parse_csv(&metrics_text)?;
    let report = dir.join("report");
    fs::create_dir_all(&report).map_err(|e| Error::io(&report, e))?;
    let mut notices = Vec::new();

    let pts = |f: fn(&crate::train::IterationRecord) -> f64| -> Vec<(f64, f64)> {
        metrics
            .records
            .iter()
            .map(|r| (r.iteration as f64, f(r)))
            .collect()
    };
    let mut references = Vec::new();
    match &manifest.generator {
        Some(g) => references.push(ReferenceLine {
            label: format!("H(Z) = {:.4}", g.nuisance_entropy()),
            y: g.nuisance_entropy(),
        }),
        None => notices.push(format!("{name}: no generator recorded; H(Z) line omitted")),
    }
    match &manifest.generator {
        Some(GeneratorSpec::Toy(spec)) => {
            let floor = estimate_h_y_given_x(spec, 200_000)?.value;
            references.push(ReferenceLine {
                label: format!("H(Y|X) = {floor:.4}"),
                y: floor,
            });
        }
        _ => notices.push(format!(
            "{name}: L_f floor needs the toy densities; line omitted"
        )),
    }
    let training = LinePlot {
        title: "Training curves (held-out)".into(),
        x_label: "iteration".into(),
        y_label: "loss".into(),
        series: vec![
            Series {
                label: "L_f".into(),
                points: pts(|r| r.loss_f),
            },
            Series {
                label: "L_r".into(),
                points: pts(|r| r.loss_r),
            },
        ],
        references,
    };
    write_file(&report.join("training.svg"), &training.to_svg())?;

    let densities = report.join("densities.csv");
    if densities.is_file() {
        let rows = read_table(&densities)?;
        let mut series: Vec<Series> = Vec::new();
        for row in rows {
            let z = num(&row[0]);
            let centre = 0.5 * (num(&row[1]) + num(&row[2]));
            let density = num(&row[3]) / (num(&row[2]) - num(&row[1]));
            let label = format!("z = {z}");
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((centre, density)),
                None => series.push(Series {
                    label,
                    points: vec![(centre, density)],
                }),
            }
        }
        let plot = LinePlot {
            title: "Conditional score densities".into(),
            x_label: "f(X)".into(),
            y_label: "density".into(),
            series,
            references: Vec::new(),
        };
        write_file(&report.join("densities.svg"), &plot.to_svg())?;
    } else {
        notices.push(format!("{name}: no densities.csv; density plot skipped"));
    }

    let ams = report.join("ams.csv");
    if ams.is_file() {
        let rows = read_table(&ams)?;
        let plot = LinePlot {
            title: "AMS vs threshold".into(),
            x_label: "threshold on f(X)".into(),
            y_label: "AMS".into(),
            series: vec![Series {
                label: "AMS".into(),
                points: rows.iter().map(|r| (num(&r[0]), num(&r[4]))).collect(),
            }],
            references: Vec::new(),
        };
        write_file(&report.join("ams.svg"), &plot.to_svg())?;
    } else {
        notices.push(format!(
            "{name}: run has no AMS evaluation; AMS plot skipped"
        ));
    }
    Ok(notices)
}

pub fn cmd_report(args: ReportArgs) -> Result<()> {
    for dir in &args.runs {
        for notice in report_run(dir)? {
            eprintln!("notice: {notice}");
        }
        let summary = dir.join("report").join("summary.txt");
        if let Ok(text) = fs::read_to_string(&summary) {
            println!("{}:", dir.display());
            for line in text.lines() {
                println!("  {line}");
            }
        }
    }
    Ok(())
}

//! Subcommands. Every command resolves its defaults, writes its outputs
//! atomically and records a manifest that `replay` can re-run.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gme_core::featurize::{unfeaturize_dense, FeatureKind};
use gme_core::pipeline::{
    bisect_noise_threshold, evaluate, noise_threshold, split, split_seed, summarize, ArmSummary, Dataset,
    DatasetConfig, EvalReport, Labeler, TrainConfig, Trainer, TRAIN_FRACTION,
};
use gme_core::rng::derive_seed;
use gme_core::sdp::{gmn_sdp, DEFAULT_TOL};
use gme_core::statekit::{to_density_matrix, DensityMatrix, GhzDiagonalSpec};
use gme_core::{gmn_analytic, label_state};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::format::{encode_checkpoint, encode_dataset, read_checkpoint, read_dataset, Checkpoint, Provenance};
use crate::manifest::{digest_file, hex, manifest_path, sha256_bytes, Manifest};
use crate::parallel::{build_dataset, run_many, thread_pool};
use crate::report::{self, arm_name, pct, ArmJson, EvalJson};

#[derive(Parser, Debug)]
#[command(name = "gme-detect", version, about = "Label, featurize and classify multipartite entangled states")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a balanced, labeled dataset
    Gen(GenArgs),
    /// Train a classifier on the training split of a dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Compute SDP negativities for every state of a dataset
    SdpLabel(SdpArgs),
    /// Accuracy of noisy GHZ-diagonal classifiers over a grid of noise weights
    Noise(NoiseArgs),
    /// Repeated train/evaluate cycles over seeds, for one or both arms
    Repeat(RepeatArgs),
    /// Re-run the command recorded in a manifest and compare output digests
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Ghz,
    Dense,
}

impl From<KindArg> for FeatureKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ghz => FeatureKind::GhzDiagonal,
            KindArg::Dense => FeatureKind::Dense,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelerArg {
    Analytic,
    Sdp,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arms {
    Cnn,
    CnnSe,
    Both,
}

impl Arms {
    fn flags(self) -> Vec<bool> {
        match self {
            Arms::Cnn => vec![false],
            Arms::CnnSe => vec![true],
            Arms::Both => vec![false, true],
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitArg {
    Test,
    Train,
    All,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub qubits: usize,
    #[arg(long, default_value_t = 500)]
    pub per_label: usize,
    /// Defaults to analytic for GHZ-diagonal states and sdp for dense ones
    #[arg(long, value_enum)]
    pub labeler: Option<LabelerArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// White-noise weight p applied before labeling
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    /// Defaults to 200 for dense data and 50 for GHZ-diagonal data
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long)]
    pub no_shuffle: bool,
}

impl TrainHyper {
    fn resolve(&mut self, kind: FeatureKind) {
        self.epochs.get_or_insert(TrainConfig::for_kind(kind, false, 0).max_epochs);
    }

    fn config(&self, kind: FeatureKind, se: bool, seed: u64) -> TrainConfig {
        let base = TrainConfig::for_kind(kind, se, seed);
        TrainConfig {
            max_epochs: self.epochs.unwrap_or(base.max_epochs),
            learning_rate: self.lr,
            l2: self.l2,
            batch_size: self.batch_size,
            shuffle: !self.no_shuffle,
            ..base
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub se: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: TrainHyper,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output prefix: writes <out>.json and <out>.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Which part of the training dataset to score; other datasets are scored whole
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long)]
    pub allow_train_eval: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON-lines output; a summary goes to <out>.summary.json
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Compare against the closed form (GHZ-diagonal data only)
    #[arg(long)]
    pub cross_check: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseArgs {
    #[arg(long)]
    pub qubits: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub p_grid: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub per_label: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Arms::CnnSe)]
    pub arms: Arms,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: TrainHyper,
    /// Output prefix: writes <out>.json and <out>.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Also verify the pure-GHZ label boundary for 3..=8 qubits
    #[arg(long)]
    pub boundary_check: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Arms::Both)]
    pub arms: Arms,
    #[command(flatten)]
    #[serde(flatten)]
    pub hyper: TrainHyper,
    /// Output prefix: writes <out>.json, <out>.table1.csv, <out>.table2.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs into this directory instead of over the recorded paths
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn relocate(path: &mut PathBuf, dir: &Path) {
    if let Some(name) = path.file_name() {
        *path = dir.join(name);
    }
}

impl Command {
    fn redirect(&mut self, dir: &Path) {
        match self {
            Command::Gen(a) => relocate(&mut a.out, dir),
            Command::Train(a) => relocate(&mut a.out, dir),
            Command::Eval(a) => relocate(&mut a.out, dir),
            Command::SdpLabel(a) => relocate(&mut a.out, dir),
            Command::Noise(a) => relocate(&mut a.out, dir),
            Command::Repeat(a) => relocate(&mut a.out, dir),
            Command::Replay(_) => {}
        }
    }
}

/// Collects outputs and timings for the manifest of one command.
struct Run {
    manifest: Manifest,
    primary: PathBuf,
    clock: Instant,
}

impl Run {
    fn new(cmd: &Command, primary: &Path) -> CliResult<Self> {
        Ok(Self {
            manifest: Manifest::new(serde_json::to_value(cmd)?),
            primary: primary.to_path_buf(),
            clock: Instant::now(),
        })
    }

    fn input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        self.manifest.inputs.push(crate::manifest::FileDigest {
            path: path.to_path_buf(),
            sha256: hex(&sha256_bytes(&bytes)),
        });
        Ok(bytes)
    }

    fn output(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        report::write(path, bytes)?;
        self.manifest.outputs.push(digest_file(path)?);
        Ok(())
    }

    fn lap(&mut self, phase: &str) {
        self.manifest.timings.insert(phase.to_string(), self.clock.elapsed().as_secs_f64());
        self.clock = Instant::now();
    }

    fn finish(self) -> CliResult<PathBuf> {
        let path = manifest_path(&self.primary);
        self.manifest.write(&path)?;
        Ok(path)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_dataset(run: &mut Run, path: &Path) -> CliResult<(Dataset, [u8; 32])> {
    let bytes = run.input(path)?;
    let digest = sha256_bytes(&bytes);
    Ok((read_dataset(&bytes[..])?, digest))
}

/// Digest of everything that determines the generated samples; the output
/// path is left out so relocated replays stay byte-identical.
fn generator_digest(a: &GenArgs) -> CliResult<[u8; 32]> {
    let cfg = serde_json::json!({
        "kind": a.kind,
        "qubits": a.qubits,
        "per_label": a.per_label,
        "labeler": a.labeler,
        "seed": a.seed,
        "noise": a.noise,
    });
    Ok(sha256_bytes(&serde_json::to_vec(&cfg)?))
}

fn cmd_gen(mut a: GenArgs) -> CliResult<()> {
    let kind = FeatureKind::from(a.kind);
    let labeler = *a.labeler.get_or_insert(match a.kind {
        KindArg::Ghz => LabelerArg::Analytic,
        KindArg::Dense => LabelerArg::Sdp,
    });
    let cfg = DatasetConfig::new(
        kind,
        a.qubits,
        a.per_label,
        match labeler {
            LabelerArg::Analytic => Labeler::Analytic,
            LabelerArg::Sdp => Labeler::Sdp,
        },
        a.seed,
    )
    .with_noise(a.noise);
    cfg.validate().map_err(|e| match e {
        gme_core::Error::Capacity(m) | gme_core::Error::InvalidInput(m) => usage(m),
        other => other.into(),
    })?;
    let cmd = Command::Gen(a.clone());
    let mut run = Run::new(&cmd, &a.out)?;
    let (ds, stats) = build_dataset(&cfg, &thread_pool())?;
    run.lap("generate");
    run.output(&a.out, &encode_dataset(&ds, &generator_digest(&a)?))?;
    run.finish()?;
    let (e, n) = ds.class_counts();
    println!(
        "wrote {} samples ({e} entangled, {n} not detected), feature length {}; {} candidates, {} marginal resampled, {} solver failures",
        ds.len(),
        ds.feature_length,
        stats.candidates,
        stats.marginal,
        stats.solver_failures
    );
    Ok(())
}

fn cmd_train(mut a: TrainArgs) -> CliResult<()> {
    let mut run = Run::new(&Command::Train(a.clone()), &a.out)?;
    let (ds, digest) = load_dataset(&mut run, &a.data)?;
    a.hyper.resolve(ds.kind);
    run.manifest.config = serde_json::to_value(Command::Train(a.clone()))?;
    let cfg = a.hyper.config(ds.kind, a.se, a.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let seed = split_seed(a.seed);
    let (train, _) = split(&ds, TRAIN_FRACTION, seed)?;
    let provenance = Provenance {
        dataset_sha256: digest,
        split_seed: seed,
        train_fraction: TRAIN_FRACTION,
    };
    let mut trainer = Trainer::new(&train, cfg)?;
    while !trainer.is_done() {
        if let Err(e) = trainer.run_epoch() {
            let diag = with_suffix(&a.out, ".diverged.gmem");
            let ck = Checkpoint {
                classifier: trainer.classifier(),
                provenance: Some(provenance),
                adam: Some(trainer.adam().clone()),
            };
            report::write(&diag, &encode_checkpoint(&ck))?;
            eprintln!("diagnostic checkpoint written to {}", diag.display());
            return Err(e.into());
        }
    }
    trainer.finalize_batchnorm()?;
    run.lap("train");
    let ck = Checkpoint {
        classifier: trainer.classifier(),
        provenance: Some(provenance),
        adam: Some(trainer.adam().clone()),
    };
    let history = trainer.history().to_vec();
    run.output(&a.out, &encode_checkpoint(&ck))?;
    run.output(&with_suffix(&a.out, ".history.csv"), &report::history_csv(&history)?)?;
    run.finish()?;
    let last = history.last().expect("at least one epoch");
    println!(
        "{} trained {} epochs on {} samples: loss {:.4}, train accuracy {}%",
        arm_name(a.se),
        history.len(),
        train.len(),
        last.loss,
        pct(last.accuracy)
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let mut run = Run::new(&Command::Eval(a.clone()), &a.out)?;
    let ck = read_checkpoint(&run.input(&a.checkpoint)?[..])?;
    let (ds, digest) = load_dataset(&mut run, &a.data)?;
    ck.classifier.check_compatible(&ds)?;
    let own = ck.provenance.as_ref().filter(|p| p.dataset_sha256 == digest);
    let target = match (own, a.split) {
        (Some(p), SplitArg::Test) => split(&ds, p.train_fraction, p.split_seed)?.1,
        (Some(p), s) => {
            if !a.allow_train_eval {
                return Err(usage("refusing to score the checkpoint's own training split without --allow-train-eval"));
            }
            match s {
                SplitArg::Train => split(&ds, p.train_fraction, p.split_seed)?.0,
                _ => ds,
            }
        }
        (None, _) => ds,
    };
    let r: EvalReport = evaluate(&ck.classifier, &target)?;
    run.lap("evaluate");
    let se = ck.classifier.model.spec().has_se();
    let row = EvalJson::new(ck.classifier.n_qubits, se, &r);
    run.output(&with_suffix(&a.out, ".json"), &report::json_bytes(&row)?)?;
    run.output(&with_suffix(&a.out, ".csv"), &report::eval_csv(std::slice::from_ref(&row))?)?;
    run.finish()?;
    println!(
        "{} on {} samples: accuracy {}%, {}: {}, {}: {}",
        arm_name(se),
        r.total,
        pct(r.accuracy()),
        report::FN_ROW,
        r.fn_count,
        report::FP_ROW,
        r.fp_count
    );
    Ok(())
}

/// GHZ-diagonal spec from its eigenvalue pairs `(λ+μ, λ−μ)`.
fn spec_from_eigenvalues(n: usize, ev: &[f64]) -> gme_core::Result<GhzDiagonalSpec> {
    let (l, m) = ev.chunks_exact(2).map(|p| (0.5 * (p[0] + p[1]), 0.5 * (p[0] - p[1]))).unzip();
    GhzDiagonalSpec::new(n, l, m)
}

#[derive(Serialize)]
struct SdpRecord {
    state_id: usize,
    gmn_value: f64,
    duality_gap: f64,
    iterations: usize,
    label: i8,
    #[serde(skip_serializing_if = "Option::is_none")]
    analytic: Option<f64>,
}

#[derive(Serialize)]
struct SdpFailure {
    state_id: usize,
    error: String,
}

#[derive(Serialize)]
struct SdpSummary {
    states: usize,
    solved: usize,
    failures: Vec<SdpFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_abs_delta: Option<f64>,
}

fn cmd_sdp(a: SdpArgs) -> CliResult<()> {
    let mut run = Run::new(&Command::SdpLabel(a.clone()), &a.out)?;
    let (ds, _) = load_dataset(&mut run, &a.data)?;
    if ds.n_qubits > gme_core::sdp::MAX_SDP_QUBITS {
        return Err(usage(format!("SDP labeling supports at most {} qubits", gme_core::sdp::MAX_SDP_QUBITS)));
    }
    if a.cross_check && ds.kind != FeatureKind::GhzDiagonal {
        return Err(usage("--cross-check needs GHZ-diagonal data"));
    }
    let n = ds.n_qubits;
    let outcomes: Vec<CliResult<SdpRecord>> = thread_pool().install(|| {
        ds.samples
            .par_iter()
            .enumerate()
            .map(|(id, s)| {
                let (rho, analytic) = match ds.kind {
                    FeatureKind::GhzDiagonal => {
                        let spec = spec_from_eigenvalues(n, &s.features)?;
                        (to_density_matrix(&spec)?, Some(gmn_analytic(&spec).value))
                    }
                    FeatureKind::Dense => (DensityMatrix::new(unfeaturize_dense(&s.features)?)?, None),
                };
                let sol = gmn_sdp(&rho, a.tol)?;
                Ok(SdpRecord {
                    state_id: id,
                    gmn_value: sol.gmn_value,
                    duality_gap: sol.duality_gap,
                    iterations: sol.iterations,
                    label: label_state(sol.gmn_value).as_i8(),
                    analytic: analytic.filter(|_| a.cross_check),
                })
            })
            .collect()
    });
    run.lap("solve");
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut max_delta: Option<f64> = None;
    let mut numerical = false;
    for (id, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => {
                if let Some(v) = rec.analytic {
                    let d = (rec.gmn_value - v).abs();
                    max_delta = Some(max_delta.map_or(d, |m| m.max(d)));
                }
                serde_json::to_writer(&mut lines, &rec)?;
                lines.push(b'\n');
            }
            Err(e) => {
                numerical |= matches!(e, CliError::Numerical(_));
                failures.push(SdpFailure {
                    state_id: id,
                    error: e.to_string(),
                });
            }
        }
    }
    let summary = SdpSummary {
        states: ds.len(),
        solved: ds.len() - failures.len(),
        failures,
        max_abs_delta: max_delta,
    };
    run.output(&a.out, &lines)?;
    run.output(&with_suffix(&a.out, ".summary.json"), &report::json_bytes(&summary)?)?;
    run.finish()?;
    println!("solved {}/{} states", summary.solved, summary.states);
    if let Some(d) = max_delta {
        println!("max |sdp - analytic| = {d:.3e}");
    }
    if !summary.failures.is_empty() {
        let msg = format!("{} states failed", summary.failures.len());
        return Err(if numerical { CliError::Numerical(msg) } else { CliError::Data(msg) });
    }
    Ok(())
}

fn run_seeds(base: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|k| derive_seed(base, k)).collect()
}

fn run_arms(ds: &Dataset, hyper: &TrainHyper, arms: Arms, seeds: &[u64]) -> CliResult<Vec<ArmSummary>> {
    let configs: Vec<TrainConfig> = arms
        .flags()
        .into_iter()
        .flat_map(|se| seeds.iter().map(move |&s| (se, s)))
        .map(|(se, s)| hyper.config(ds.kind, se, s))
        .collect();
    for c in &configs {
        c.validate().map_err(|e| usage(e.to_string()))?;
    }
    let mut results = run_many(ds, &configs, &thread_pool()).into_iter();
    arms.flags()
        .into_iter()
        .map(|se| {
            let runs = results.by_ref().take(seeds.len()).collect::<gme_core::Result<Vec<_>>>()?;
            Ok(summarize(se, runs)?)
        })
        .collect()
}

#[derive(Serialize)]
struct RepeatJson {
    qubits: usize,
    seeds: Vec<u64>,
    arms: Vec<ArmJson>,
    se_minus_cnn: Option<f64>,
}

fn se_delta(arms: &[ArmSummary]) -> Option<f64> {
    let c = arms.iter().find(|a| !a.se)?;
    let s = arms.iter().find(|a| a.se)?;
    Some(s.mean - c.mean)
}

fn cmd_repeat(mut a: RepeatArgs) -> CliResult<()> {
    if a.repeats < 2 {
        return Err(usage("--repeats must be at least 2"));
    }
    let mut run = Run::new(&Command::Repeat(a.clone()), &a.out)?;
    let (ds, _) = load_dataset(&mut run, &a.data)?;
    a.hyper.resolve(ds.kind);
    run.manifest.config = serde_json::to_value(Command::Repeat(a.clone()))?;
    let seeds = run_seeds(a.seed, a.repeats);
    let arms = run_arms(&ds, &a.hyper, a.arms, &seeds)?;
    run.lap("train");
    let out = RepeatJson {
        qubits: ds.n_qubits,
        seeds: seeds.clone(),
        arms: arms.iter().map(|s| ArmJson::new(ds.n_qubits, s)).collect(),
        se_minus_cnn: se_delta(&arms),
    };
    run.output(&with_suffix(&a.out, ".json"), &report::json_bytes(&out)?)?;
    run.output(&with_suffix(&a.out, ".table1.csv"), &report::table1_csv(ds.n_qubits, &arms)?)?;
    run.output(&with_suffix(&a.out, ".table2.csv"), &report::table2_csv(ds.n_qubits, &arms)?)?;
    run.finish()?;
    for s in &arms {
        println!(
            "{}: mean accuracy {}% (std {}) over {} runs",
            arm_name(s.se),
            pct(s.mean),
            pct(s.std),
            s.runs.len()
        );
    }
    if let Some(d) = out.se_minus_cnn {
        println!("SE delta: {:+.2} points", 100.0 * d);
    }
    Ok(())
}

#[derive(Serialize)]
struct NoisePoint {
    p: f64,
    degenerate: bool,
    arms: Vec<ArmJson>,
}

#[derive(Serialize)]
struct BoundaryRow {
    qubits: usize,
    closed_form: f64,
    bisection: f64,
}

#[derive(Serialize)]
struct NoiseJson {
    qubits: usize,
    seeds: Vec<u64>,
    points: Vec<NoisePoint>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    boundary: Vec<BoundaryRow>,
}

#[derive(Serialize)]
struct NoiseCsvRow {
    qubits: usize,
    p: f64,
    arm: String,
    mean_accuracy_pct: String,
    std_pct: String,
    runs: usize,
    degenerate: bool,
}

fn cmd_noise(mut a: NoiseArgs) -> CliResult<()> {
    if a.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(usage("--p-grid values must lie in [0, 1]"));
    }
    if a.repeats < 2 {
        return Err(usage("--repeats must be at least 2"));
    }
    a.hyper.resolve(FeatureKind::GhzDiagonal);
    let mut run = Run::new(&Command::Noise(a.clone()), &a.out)?;
    let mut boundary = Vec::new();
    if a.boundary_check {
        for n in 3..=8 {
            let b = bisect_noise_threshold(n, 1e-10)?;
            let c = noise_threshold(n);
            if (b - c).abs() > 1e-9 {
                return Err(CliError::Numerical(format!("boundary mismatch at n = {n}: {b} vs {c}")));
            }
            boundary.push(BoundaryRow {
                qubits: n,
                closed_form: c,
                bisection: b,
            });
        }
        println!("boundary check passed for n = 3..=8 (p* = 3/7 at n = 3)");
    }
    let seeds = run_seeds(a.seed, a.repeats);
    let pool = thread_pool();
    let mut points = Vec::new();
    for &p in &a.p_grid {
        let cfg = DatasetConfig::new(FeatureKind::GhzDiagonal, a.qubits, a.per_label, Labeler::Analytic, a.seed).with_noise(p);
        if !gme_core::pipeline::entanglement_possible(a.qubits, p) {
            eprintln!("warning: p = {p} is degenerate, no {}-qubit state stays entangled; skipped", a.qubits);
            points.push(NoisePoint {
                p,
                degenerate: true,
                arms: Vec::new(),
            });
            continue;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        let (ds, _) = build_dataset(&cfg, &pool)?;
        let arms = run_arms(&ds, &a.hyper, a.arms, &seeds)?;
        for s in &arms {
            println!("p = {p}: {} mean accuracy {}% (std {})", arm_name(s.se), pct(s.mean), pct(s.std));
        }
        points.push(NoisePoint {
            p,
            degenerate: false,
            arms: arms.iter().map(|s| ArmJson::new(a.qubits, s)).collect(),
        });
    }
    run.lap("sweep");
    let rows: Vec<NoiseCsvRow> = points
        .iter()
        .flat_map(|pt| {
            let degenerate: Vec<NoiseCsvRow> = if pt.degenerate {
                a.arms
                    .flags()
                    .into_iter()
                    .map(|se| NoiseCsvRow {
                        qubits: a.qubits,
                        p: pt.p,
                        arm: arm_name(se).to_string(),
                        mean_accuracy_pct: String::new(),
                        std_pct: String::new(),
                        runs: 0,
                        degenerate: true,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            degenerate.into_iter().chain(pt.arms.iter().map(|arm| NoiseCsvRow {
                qubits: a.qubits,
                p: pt.p,
                arm: arm.arm.clone(),
                mean_accuracy_pct: pct(arm.mean_accuracy),
                std_pct: pct(arm.std_accuracy),
                runs: arm.runs.len(),
                degenerate: false,
            }))
        })
        .collect();
    let out = NoiseJson {
        qubits: a.qubits,
        seeds,
        points,
        boundary,
    };
    run.output(&with_suffix(&a.out, ".json"), &report::json_bytes(&out)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    run.output(&with_suffix(&a.out, ".csv"), &bytes)?;
    run.finish()?;
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> CliResult<()> {
    let recorded = Manifest::read(&a.manifest)?;
    let mut cmd: Command = serde_json::from_value(recorded.config.clone())?;
    if matches!(cmd, Command::Replay(_)) {
        return Err(usage("a replay manifest cannot be replayed"));
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        cmd.redirect(dir);
    }
    let primary = primary_output(&cmd);
    execute(cmd)?;
    let fresh = Manifest::read(&manifest_path(&primary))?;
    let mut mismatches = 0;
    for (old, new) in recorded.outputs.iter().zip(&fresh.outputs) {
        let same = old.sha256 == new.sha256;
        println!("{} {}", if same { "identical" } else { "DIFFERS  " }, new.path.display());
        mismatches += usize::from(!same);
    }
    if recorded.outputs.len() != fresh.outputs.len() {
        return Err(CliError::Data("replay produced a different set of outputs".into()));
    }
    if mismatches > 0 {
        return Err(CliError::Data(format!("{mismatches} outputs differ from the manifest")));
    }
    Ok(())
}

fn primary_output(cmd: &Command) -> PathBuf {
    match cmd {
        Command::Gen(a) => a.out.clone(),
        Command::Train(a) => a.out.clone(),
        Command::Eval(a) => a.out.clone(),
        Command::SdpLabel(a) => a.out.clone(),
        Command::Noise(a) => a.out.clone(),
        Command::Repeat(a) => a.out.clone(),
        Command::Replay(a) => a.manifest.clone(),
    }
}

pub fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::SdpLabel(a) => cmd_sdp(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Repeat(a) => cmd_repeat(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalue_pairs_rebuild_the_spec() {
        let spec = gme_core::statekit::random_ghz_diagonal(4, gme_core::Label::Entangled, 3).unwrap();
        let back = spec_from_eigenvalues(4, &spec.eigenvalues()).unwrap();
        for (a, b) in back.lambdas().iter().zip(spec.lambdas()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((gmn_analytic(&back).value - gmn_analytic(&spec).value).abs() < 1e-15);
    }

    #[test]
    fn commands_survive_a_manifest_round_trip() {
        let cli = Cli::try_parse_from(["gme-detect", "train", "--data", "d.gmed", "--out", "m.gmem", "--se", "--epochs", "3"]).unwrap();
        let v = serde_json::to_value(&cli.command).unwrap();
        assert_eq!(v["command"], "train");
        let back: Command = serde_json::from_value(v).unwrap();
        assert_eq!(back, cli.command);
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["gme-detect", "gen", "--kind", "ghz"]), 1);
        assert_eq!(run(["gme-detect", "bogus"]), 1);
    }
}

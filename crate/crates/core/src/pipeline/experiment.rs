use alloc::vec::Vec;

use super::dataset::{split, Dataset};
use super::eval::{evaluate, EvalReport};
use super::train::{train, EpochRecord, TrainConfig};
use crate::error::bail;
use crate::gmn::gmn_analytic;
use crate::rng::derive_seed;
use crate::statekit::GhzDiagonalSpec;
use crate::Result;

pub const TRAIN_FRACTION: f64 = 0.7;
const SPLIT_STREAM: u64 = 0x53504c54;

/// One split/train/evaluate cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub seed: u64,
    pub se: bool,
    pub eval: EvalReport,
    pub history: Vec<EpochRecord>,
}

/// Seed of the stratified split used by a run with seed `seed`.
pub fn split_seed(seed: u64) -> u64 {
    derive_seed(seed, SPLIT_STREAM)
}

/// Split and model initialization are both derived from `cfg.seed`.
pub fn run_once(dataset: &Dataset, cfg: TrainConfig) -> Result<RunReport> {
    let (tr, te) = split(dataset, TRAIN_FRACTION, split_seed(cfg.seed))?;
    let (clf, history) = train(&tr, cfg)?;
    Ok(RunReport {
        seed: cfg.seed,
        se: cfg.se,
        eval: evaluate(&clf, &te)?,
        history,
    })
}

/// Mean and sample standard deviation of test accuracy over runs of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub se: bool,
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<RunReport>,
}

pub fn summarize(se: bool, mut runs: Vec<RunReport>) -> Result<ArmSummary> {
    if runs.is_empty() {
        bail!(InvalidInput, "no runs to summarize");
    }
    runs.sort_by_key(|r| r.seed);
    let acc: Vec<f64> = runs.iter().map(|r| r.eval.accuracy()).collect();
    let (mean, std) = mean_sample_std(&acc);
    Ok(ArmSummary { se, mean, std, runs })
}

/// Mean and `n − 1` standard deviation (0 for a single value).
pub fn mean_sample_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, crate::math::sqrt(var))
}

/// Serial repeat over `seeds` for each requested arm.
pub fn repeat_experiment(dataset: &Dataset, base: TrainConfig, seeds: &[u64], arms: &[bool]) -> Result<Vec<ArmSummary>> {
    if seeds.len() < 2 {
        bail!(InvalidInput, "repeats need at least 2 seeds, got {}", seeds.len());
    }
    arms.iter()
        .map(|&se| {
            let runs = seeds
                .iter()
                .map(|&seed| run_once(dataset, TrainConfig { seed, se, ..base }))
                .collect::<Result<Vec<_>>>()?;
            summarize(se, runs)
        })
        .collect()
}

/// Noise weight above which the `p`-noisy pure GHZ state is entangled:
/// `(2^(n−1) − 1) / (2ⁿ − 1)`.
pub fn noise_threshold(n: usize) -> f64 {
    let h = (1u64 << n) as f64;
    (h / 2.0 - 1.0) / (h - 1.0)
}

/// Bisection of `N_g(p·GHZ + (1−p)·I/2ⁿ) > 0` over `p ∈ [0, 1]`.
pub fn bisect_noise_threshold(n: usize, tol: f64) -> Result<f64> {
    let ghz = GhzDiagonalSpec::ghz(n)?;
    let detected = |p: f64| -> Result<bool> { Ok(gmn_analytic(&ghz.with_noise(p)?).value > 0.0) };
    let (mut lo, mut hi) = (0.0, 1.0);
    if detected(lo)? || !detected(hi)? {
        bail!(InvalidInput, "no sign change of the GMN on [0, 1]");
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if detected(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;

use crate::error::{bail, Error};
use crate::featurize::{featurize_dense, featurize_ghz_diagonal, FeatureKind};
use crate::gmn::{gmn_analytic, label_state, Label, LABEL_THRESHOLD};
use crate::rng::{derive_seed, derive_seed2, seeded};
use crate::sdp::{gmn_sdp, DEFAULT_TOL, MAX_SDP_QUBITS};
use crate::statekit::{
    add_white_noise, random_density_matrix, random_noisy_ghz_diagonal, random_rank, to_density_matrix,
    DensityMatrix, GhzDiagonalSpec,
};
use crate::Result;

/// Candidates tried per requested sample before generation gives up.
pub const MAX_CANDIDATES_PER_SAMPLE: u64 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Labeler {
    Analytic,
    Sdp,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetConfig {
    pub kind: FeatureKind,
    pub n_qubits: usize,
    pub per_label: usize,
    pub labeler: Labeler,
    pub seed: u64,
    /// White-noise weight applied before labeling; 1 means no noise.
    pub noise: f64,
}

impl DatasetConfig {
    pub fn new(kind: FeatureKind, n_qubits: usize, per_label: usize, labeler: Labeler, seed: u64) -> Self {
        Self {
            kind,
            n_qubits,
            per_label,
            labeler,
            seed,
            noise: 1.0,
        }
    }

    pub fn with_noise(mut self, p: f64) -> Self {
        self.noise = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_label == 0 {
            bail!(InvalidInput, "per-label count must be positive");
        }
        if !(0.0..=1.0).contains(&self.noise) {
            bail!(InvalidInput, "noise weight p = {} outside [0, 1]", self.noise);
        }
        match (self.kind, self.labeler) {
            (FeatureKind::Dense, Labeler::Analytic) => {
                bail!(InvalidInput, "the analytic labeler needs GHZ-diagonal states")
            }
            (_, Labeler::Sdp) if self.n_qubits > MAX_SDP_QUBITS => {
                bail!(Capacity, "SDP labeling supports n <= {MAX_SDP_QUBITS}, got n = {}", self.n_qubits)
            }
            _ => {}
        }
        if self.n_qubits < 2 {
            bail!(InvalidInput, "need at least 2 qubits, got {}", self.n_qubits);
        }
        if self.kind == FeatureKind::GhzDiagonal && !entanglement_possible(self.n_qubits, self.noise) {
            bail!(
                InvalidInput,
                "no {}-qubit GHZ-diagonal state is entangled at p = {}",
                self.n_qubits,
                self.noise
            );
        }
        Ok(())
    }

    pub fn feature_length(&self) -> usize {
        self.kind.length(self.n_qubits)
    }
}

/// Whether some GHZ-diagonal state stays detected (with the generator's
/// margin) after mixing with weight `p`.
pub fn entanglement_possible(n: usize, p: f64) -> bool {
    random_noisy_ghz_diagonal(n, Label::Entangled, p, 0).is_ok()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
    pub marginal: bool,
    pub source_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: FeatureKind,
    pub n_qubits: usize,
    pub feature_length: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(kind: FeatureKind, n_qubits: usize, samples: Vec<Sample>) -> Result<Self> {
        let feature_length = kind.length(n_qubits);
        if let Some(bad) = samples.iter().position(|s| s.features.len() != feature_length) {
            bail!(
                InvalidInput,
                "sample {bad} has {} features, expected {feature_length}",
                samples[bad].features.len()
            );
        }
        Ok(Self {
            kind,
            n_qubits,
            feature_length,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `(entangled, not detected)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let e = self.samples.iter().filter(|s| s.label == Label::Entangled).count();
        (e, self.samples.len() - e)
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            kind: self.kind,
            n_qubits: self.n_qubits,
            feature_length: self.feature_length,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// A generated and labeled state, before balancing.
#[derive(Clone, Debug, PartialEq)]
pub enum Candidate {
    Labeled { sample: Sample, gmn: f64 },
    /// `0 < N_g ≤` the label threshold.
    Marginal,
    /// The interior-point solver did not converge on this state.
    SolverFailure,
}

/// The state behind candidate `index`.
pub enum State {
    Ghz(GhzDiagonalSpec),
    Dense(DensityMatrix),
}

/// Generate the state for candidate `index`. GHZ-diagonal candidates alternate
/// their target label by index parity; dense ones draw a uniform rank.
pub fn candidate_state(cfg: &DatasetConfig, index: u64) -> Result<(State, u64)> {
    let seed = derive_seed(cfg.seed, index);
    Ok(match cfg.kind {
        FeatureKind::GhzDiagonal => {
            let target = if index % 2 == 0 { Label::Entangled } else { Label::NotDetected };
            (State::Ghz(random_noisy_ghz_diagonal(cfg.n_qubits, target, cfg.noise, seed)?), seed)
        }
        FeatureKind::Dense => {
            let rank = random_rank(cfg.n_qubits, derive_seed2(seed, 0, 0));
            let rho = random_density_matrix(cfg.n_qubits, rank, derive_seed2(seed, 0, 1))?;
            let rho = if cfg.noise < 1.0 { add_white_noise(&rho, cfg.noise)? } else { rho };
            (State::Dense(rho), seed)
        }
    })
}

/// Label and featurize candidate `index`.
pub fn candidate(cfg: &DatasetConfig, index: u64) -> Result<Candidate> {
    let (state, seed) = candidate_state(cfg, index)?;
    let gmn = match (&state, cfg.labeler) {
        (State::Ghz(spec), Labeler::Analytic) => gmn_analytic(spec).value,
        (State::Ghz(spec), Labeler::Sdp) => match gmn_sdp(&to_density_matrix(spec)?, DEFAULT_TOL) {
            Ok(sol) => sol.gmn_value,
            Err(Error::Convergence { .. }) => return Ok(Candidate::SolverFailure),
            Err(e) => return Err(e),
        },
        (State::Dense(rho), Labeler::Sdp) => match gmn_sdp(rho, DEFAULT_TOL) {
            Ok(sol) => sol.gmn_value,
            Err(Error::Convergence { .. }) => return Ok(Candidate::SolverFailure),
            Err(e) => return Err(e),
        },
        (State::Dense(_), Labeler::Analytic) => bail!(InvalidInput, "the analytic labeler needs GHZ-diagonal states"),
    };
    if gmn > 0.0 && gmn <= LABEL_THRESHOLD {
        return Ok(Candidate::Marginal);
    }
    let features = match state {
        State::Ghz(spec) => featurize_ghz_diagonal(&spec).values,
        State::Dense(rho) => featurize_dense(&rho).values,
    };
    Ok(Candidate::Labeled {
        sample: Sample {
            features,
            label: label_state(gmn),
            marginal: false,
            source_seed: seed,
        },
        gmn,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub candidates: u64,
    pub marginal: u64,
    pub solver_failures: u64,
    /// Labeled candidates whose class was already full.
    pub overflow: u64,
}

/// Accepts candidates in index order until both classes are full, so any
/// evaluation order (serial or parallel) yields the same dataset.
#[derive(Clone, Debug)]
pub struct DatasetBuilder {
    cfg: DatasetConfig,
    accepted: Vec<(u64, Sample)>,
    counts: [usize; 2],
    next: u64,
    stats: BuildStats,
}

impl DatasetBuilder {
    pub fn new(cfg: DatasetConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            accepted: Vec::with_capacity(2 * cfg.per_label),
            counts: [0; 2],
            next: 0,
            stats: BuildStats::default(),
        })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.cfg
    }

    pub fn is_complete(&self) -> bool {
        self.counts.iter().all(|&c| c == self.cfg.per_label)
    }

    /// The next `count` candidate indices to evaluate.
    pub fn next_indices(&self, count: u64) -> Range<u64> {
        self.next..self.next + count
    }

    /// Offer the outcome of candidate `self.next`; outcomes must arrive in order.
    pub fn offer(&mut self, outcome: Candidate) -> Result<()> {
        if self.is_complete() {
            return Ok(());
        }
        let index = self.next;
        self.next += 1;
        self.stats.candidates += 1;
        match outcome {
            Candidate::Marginal => self.stats.marginal += 1,
            Candidate::SolverFailure => self.stats.solver_failures += 1,
            Candidate::Labeled { sample, .. } => {
                let c = sample.label.class_index();
                if self.counts[c] < self.cfg.per_label {
                    self.counts[c] += 1;
                    self.accepted.push((index, sample));
                } else {
                    self.stats.overflow += 1;
                }
            }
        }
        if !self.is_complete() && self.next >= MAX_CANDIDATES_PER_SAMPLE * 2 * self.cfg.per_label as u64 {
            bail!(
                InvalidInput,
                "gave up after {} candidates with class counts {:?}",
                self.next,
                self.counts
            );
        }
        Ok(())
    }

    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    pub fn finish(self) -> Result<(Dataset, BuildStats)> {
        if !self.is_complete() {
            bail!(InvalidInput, "dataset incomplete: class counts {:?}", self.counts);
        }
        let samples = self.accepted.into_iter().map(|(_, s)| s).collect();
        Ok((Dataset::new(self.cfg.kind, self.cfg.n_qubits, samples)?, self.stats))
    }
}

/// Serial [`DatasetBuilder`] driver.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<(Dataset, BuildStats)> {
    let mut builder = DatasetBuilder::new(*cfg)?;
    while !builder.is_complete() {
        let index = builder.next_indices(1).start;
        builder.offer(candidate(cfg, index)?)?;
    }
    builder.finish()
}

/// Stratified split: `round(fraction · class size)` of each class goes to
/// the training set. Both parts keep the dataset's sample order.
pub fn split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        bail!(InvalidInput, "train fraction {fraction} outside (0, 1)");
    }
    let mut rng = seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [Label::Entangled, Label::NotDetected] {
        let mut idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.samples[i].label == label).collect();
        let k = libm::round(fraction * idx.len() as f64) as usize;
        if idx.len() < 2 || k == 0 || k == idx.len() {
            bail!(InvalidInput, "class {} has {} samples, too few to stratify", label.as_i8(), idx.len());
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::dataset::Dataset;
use crate::error::{bail, Error};
use crate::featurize::{FeatureKind, NormStats};
use crate::gmn::Label;
use crate::nn::{AdamConfig, AdamState, Model, Tensor, L2_DEFAULT};
use crate::rng::{derive_seed, seeded};
use crate::Result;

pub const DEFAULT_BATCH: usize = 128;
const FINALIZE_CHUNK: usize = 64;
const INIT_STREAM: u64 = 0x494e4954;
const SHUFFLE_STREAM: u64 = 0x53485546;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub se: bool,
}

impl TrainConfig {
    /// 200 epochs for dense inputs, 50 for GHZ-diagonal ones.
    pub fn for_kind(kind: FeatureKind, se: bool, seed: u64) -> Self {
        Self {
            max_epochs: match kind {
                FeatureKind::Dense => 200,
                FeatureKind::GhzDiagonal => 50,
            },
            learning_rate: 1e-3,
            l2: L2_DEFAULT,
            batch_size: DEFAULT_BATCH,
            shuffle: true,
            seed,
            se,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size < 2 {
            bail!(InvalidInput, "need at least one epoch and a batch size of at least 2");
        }
        if !(self.learning_rate > 0.0) || !(self.l2 >= 0.0) || !self.learning_rate.is_finite() || !self.l2.is_finite() {
            bail!(InvalidInput, "learning rate must be positive and l2 non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean data loss plus the L2 term.
    pub loss: f64,
    pub data_loss: f64,
    /// Training accuracy of the batch forward passes.
    pub accuracy: f64,
}

/// A trained model together with the input normalization it was fit with.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub kind: FeatureKind,
    pub n_qubits: usize,
    pub stats: NormStats,
    pub model: Model,
}

impl Classifier {
    /// Predicted labels for raw (unnormalized) feature rows.
    pub fn predict<'a, I>(&self, rows: I) -> Result<Vec<Label>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let length = self.stats.len();
        let mut out = Vec::new();
        let mut buf = Vec::with_capacity(DEFAULT_BATCH * length);
        let flush = |buf: &mut Vec<f64>, out: &mut Vec<Label>| -> Result<()> {
            if buf.is_empty() {
                return Ok(());
            }
            let x = Tensor::from_vec(buf.len() / length, length, 1, core::mem::take(buf))?;
            out.extend(self.model.predict(&x)?.into_iter().map(Label::from_class_index));
            Ok(())
        };
        for row in rows {
            let start = buf.len();
            buf.extend_from_slice(row);
            self.stats.apply_in_place(&mut buf[start..])?;
            if buf.len() == DEFAULT_BATCH * length {
                flush(&mut buf, &mut out)?;
            }
        }
        flush(&mut buf, &mut out)?;
        Ok(out)
    }

    pub fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if data.kind != self.kind || data.n_qubits != self.n_qubits || data.feature_length != self.stats.len() {
            bail!(
                InvalidInput,
                "model expects {:?} features for {} qubits, data holds {:?} for {}",
                self.kind,
                self.n_qubits,
                data.kind,
                data.n_qubits
            );
        }
        Ok(())
    }
}

/// Epoch-at-a-time minibatch Adam.
pub struct Trainer {
    cfg: TrainConfig,
    kind: FeatureKind,
    n_qubits: usize,
    stats: NormStats,
    model: Model,
    adam: AdamState,
    x: Vec<f64>,
    labels: Vec<usize>,
    length: usize,
    history: Vec<EpochRecord>,
}

impl Trainer {
    /// Fits normalization on `train` and initializes the reference model.
    pub fn new(train: &Dataset, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if train.len() < 2 {
            bail!(InvalidInput, "need at least 2 training samples, got {}", train.len());
        }
        let length = train.feature_length;
        let rows = train.samples.iter().map(|s| &s.features[..]);
        // GHZ-basis positions are exchangeable, so they share one scale; a
        // per-position fit leaves unseen spike positions badly out of range
        let stats = match train.kind {
            FeatureKind::Dense => NormStats::fit(rows, length)?,
            FeatureKind::GhzDiagonal => NormStats::fit_pooled(rows, length)?,
        };
        let mut x = Vec::with_capacity(train.len() * length);
        for s in &train.samples {
            let start = x.len();
            x.extend_from_slice(&s.features);
            stats.apply_in_place(&mut x[start..])?;
        }
        let model = Model::reference(length, cfg.se, derive_seed(cfg.seed, INIT_STREAM))?;
        Ok(Self {
            adam: AdamState::new(model.num_params()),
            cfg,
            kind: train.kind,
            n_qubits: train.n_qubits,
            stats,
            model,
            x,
            labels: train.samples.iter().map(|s| s.label.class_index()).collect(),
            length,
            history: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn is_done(&self) -> bool {
        self.history.len() >= self.cfg.max_epochs
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn classifier(&self) -> Classifier {
        Classifier {
            kind: self.kind,
            n_qubits: self.n_qubits,
            stats: self.stats.clone(),
            model: self.model.clone(),
        }
    }

    /// Sets the batchnorm statistics to population values over the whole
    /// training split. The running averages of the last epochs can lag the
    /// final weights badly when logit margins are small.
    pub fn finalize_batchnorm(&mut self) -> Result<()> {
        let count = self.labels.len();
        self.model.set_population_stats(&self.x, count, FINALIZE_CHUNK)
    }

    pub fn into_parts(self) -> (Classifier, Vec<EpochRecord>) {
        (
            Classifier {
                kind: self.kind,
                n_qubits: self.n_qubits,
                stats: self.stats,
                model: self.model,
            },
            self.history,
        )
    }

    /// Batch boundaries for `count` samples; a trailing batch of one joins
    /// the previous batch (batchnorm needs two samples).
    fn batches(&self, count: usize) -> Vec<(usize, usize)> {
        let bs = self.cfg.batch_size;
        let mut out = Vec::new();
        let mut start = 0;
        while start < count {
            let mut end = (start + bs).min(count);
            if count - end == 1 {
                end = count;
            }
            out.push((start, end));
            start = end;
        }
        out
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.history.len();
        let count = self.labels.len();
        let mut order: Vec<usize> = (0..count).collect();
        if self.cfg.shuffle {
            order.shuffle(&mut seeded(crate::rng::derive_seed2(self.cfg.seed, SHUFFLE_STREAM, epoch as u64)));
        }
        let adam_cfg = AdamConfig {
            learning_rate: self.cfg.learning_rate,
            ..AdamConfig::default()
        };
        let (mut data_loss, mut l2_loss, mut correct) = (0.0, 0.0, 0usize);
        for (start, end) in self.batches(count) {
            let idx = &order[start..end];
            let mut xb = Vec::with_capacity(idx.len() * self.length);
            for &i in idx {
                xb.extend_from_slice(&self.x[i * self.length..(i + 1) * self.length]);
            }
            let yb: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
            let x = Tensor::from_vec(idx.len(), self.length, 1, xb)?;
            let s = self.model.train_batch(&x, &yb, &mut self.adam, &adam_cfg, self.cfg.l2)?;
            let w = idx.len() as f64;
            data_loss += s.data_loss * w;
            l2_loss += s.l2_loss * w;
            correct += s.correct;
            if !s.data_loss.is_finite() {
                break;
            }
        }
        let data_loss = data_loss / count as f64;
        let loss = data_loss + l2_loss / count as f64;
        if !loss.is_finite() || !self.model.params().iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        let record = EpochRecord {
            epoch,
            loss,
            data_loss,
            accuracy: correct as f64 / count as f64,
        };
        self.history.push(record);
        Ok(record)
    }
}

/// Runs every epoch of `cfg` on `train`, then finalizes the batchnorm statistics.
pub fn train(train: &Dataset, cfg: TrainConfig) -> Result<(Classifier, Vec<EpochRecord>)> {
    let mut t = Trainer::new(train, cfg)?;
    while !t.is_done() {
        t.run_epoch()?;
    }
    t.finalize_batchnorm()?;
    Ok(t.into_parts())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::dataset::Sample;

    /// Linearly separable toy set: class decided by the sign of the mean.
    fn toy(count: usize) -> Dataset {
        let samples = (0..count)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Entangled } else { Label::NotDetected };
                let sign = if label == Label::Entangled { 1.0 } else { -1.0 };
                Sample {
                    features: (0..16).map(|k| sign * (1.0 + 0.1 * ((i * 7 + k) % 5) as f64)).collect(),
                    label,
                    marginal: false,
                    source_seed: i as u64,
                }
            })
            .collect();
        Dataset::new(FeatureKind::GhzDiagonal, 4, samples).unwrap()
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let cfg = TrainConfig {
            max_epochs: 7,
            ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, false, 1)
        };
        let (_, history) = train(&toy(16), cfg).unwrap();
        assert_eq!(history.len(), 7);
        assert!(history.iter().enumerate().all(|(i, r)| r.epoch == i));
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let data = toy(16);
        let cfg = TrainConfig {
            max_epochs: 300,
            batch_size: 16,
            ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, true, 2)
        };
        let (clf, history) = train(&data, cfg).unwrap();
        assert_eq!(history.last().unwrap().accuracy, 1.0);
        let pred = clf.predict(data.samples.iter().map(|s| &s.features[..])).unwrap();
        assert!(pred.iter().zip(&data.samples).all(|(p, s)| *p == s.label));
    }

    #[test]
    fn trailing_single_sample_joins_previous_batch() {
        let t = Trainer::new(
            &toy(9),
            TrainConfig {
                batch_size: 4,
                ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, false, 0)
            },
        )
        .unwrap();
        assert_eq!(t.batches(9), [(0, 4), (4, 9)]);
        assert_eq!(t.batches(10), [(0, 4), (4, 8), (8, 10)]);
    }

    #[test]
    fn repeat_runs_are_bitwise_identical() {
        let cfg = TrainConfig {
            max_epochs: 5,
            batch_size: 8,
            ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, true, 3)
        };
        let a = train(&toy(20), cfg).unwrap();
        let b = train(&toy(20), cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = TrainConfig {
            max_epochs: 3,
            learning_rate: f64::MAX,
            ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, false, 0)
        };
        let mut t = Trainer::new(&toy(16), cfg).unwrap();
        let outcome = (0..3).map(|_| t.run_epoch()).find(|r| r.is_err());
        assert!(matches!(outcome, Some(Err(Error::Divergence { .. }))));
    }

    #[test]
    fn test_statistics_would_change_outputs() {
        let data = toy(16);
        let cfg = TrainConfig {
            max_epochs: 2,
            ..TrainConfig::for_kind(FeatureKind::GhzDiagonal, false, 0)
        };
        let (clf, _) = train(&data, cfg).unwrap();
        let shifted: Vec<Vec<f64>> = data.samples.iter().map(|s| s.features.iter().map(|v| v + 3.0).collect()).collect();
        let own = NormStats::fit(shifted.iter().map(|r| &r[..]), 16).unwrap();
        let leak = Classifier { stats: own, ..clf.clone() };
        let rows = || shifted.iter().map(|r| &r[..]);
        let logits = |c: &Classifier| {
            let mut x = Vec::new();
            for r in rows() {
                let s = x.len();
                x.extend_from_slice(r);
                c.stats.apply_in_place(&mut x[s..]).unwrap();
            }
            c.model.logits(&Tensor::from_vec(16, 16, 1, x).unwrap()).unwrap()
        };
        assert_ne!(logits(&clf), logits(&leak));
    }
}

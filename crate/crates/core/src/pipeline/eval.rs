use alloc::vec::Vec;

use super::dataset::Dataset;
use super::train::Classifier;
use crate::error::bail;
use crate::gmn::Label;
use crate::Result;

/// Confusion counts of a binary evaluation.
///
/// A false negative is an entangled state predicted not entangled; a false
/// positive is a non-entangled state predicted entangled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalReport {
    pub total: usize,
    pub correct: usize,
    pub fn_count: usize,
    pub fp_count: usize,
    pub entangled_total: usize,
    pub entangled_correct: usize,
    pub not_detected_total: usize,
    pub not_detected_correct: usize,
}

impl EvalReport {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            bail!(InvalidInput, "{} labels vs {} predictions", truth.len(), predicted.len());
        }
        let mut r = EvalReport {
            total: truth.len(),
            ..Self::default()
        };
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Entangled, Label::Entangled) => r.entangled_correct += 1,
                (Label::Entangled, Label::NotDetected) => r.fn_count += 1,
                (Label::NotDetected, Label::NotDetected) => r.not_detected_correct += 1,
                (Label::NotDetected, Label::Entangled) => r.fp_count += 1,
            }
        }
        r.entangled_total = r.entangled_correct + r.fn_count;
        r.not_detected_total = r.not_detected_correct + r.fp_count;
        r.correct = r.entangled_correct + r.not_detected_correct;
        Ok(r)
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// `fn + fp + correct = total` and the per-class totals add up.
    pub fn is_consistent(&self) -> bool {
        self.fn_count + self.fp_count + self.correct == self.total
            && self.entangled_total + self.not_detected_total == self.total
            && self.entangled_correct + self.fn_count == self.entangled_total
            && self.not_detected_correct + self.fp_count == self.not_detected_total
    }
}

pub fn evaluate(clf: &Classifier, test: &Dataset) -> Result<EvalReport> {
    clf.check_compatible(test)?;
    let predicted = clf.predict(test.samples.iter().map(|s| &s.features[..]))?;
    let truth: Vec<Label> = test.samples.iter().map(|s| s.label).collect();
    EvalReport::from_predictions(&truth, &predicted)
}

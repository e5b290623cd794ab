//! Closed-form renormalized GMN for GHZ-diagonal states and the labeling rule.
//!
//! For a GHZ-diagonal state `N_g = max_i {0, |μ_i| − w_i} = max_i {0, F_i − 1/2}`
//! with `w_i = Σ_{k≠i} λ_k` and `F_i` the largest GHZ-basis fidelity of pair `i`.

use crate::statekit::GhzDiagonalSpec;

/// Values at or below this are labeled [`Label::NotDetected`]; values in
/// `(0, LABEL_THRESHOLD]` are additionally flagged as marginal.
pub const LABEL_THRESHOLD: f64 = 1e-6;

/// Class label: `-1` genuinely multipartite entangled, `+1` not detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Entangled,
    NotDetected,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Entangled => -1,
            Label::NotDetected => 1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Label::Entangled),
            1 => Some(Label::NotDetected),
            _ => None,
        }
    }

    /// Classifier output index: entangled → 0, not detected → 1.
    pub fn class_index(self) -> usize {
        match self {
            Label::Entangled => 0,
            Label::NotDetected => 1,
        }
    }

    pub fn from_class_index(c: usize) -> Self {
        if c == 0 {
            Label::Entangled
        } else {
            Label::NotDetected
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmnResult {
    pub value: f64,
    pub argmax_index: usize,
    /// `|μ_i| − w_i` at the maximizing index.
    pub witness_margin: f64,
    pub label: Label,
}

impl GmnResult {
    /// Positive but not above the label threshold.
    pub fn is_marginal(&self) -> bool {
        self.value > 0.0 && self.value <= LABEL_THRESHOLD
    }
}

/// `−1` iff `value > LABEL_THRESHOLD`.
pub fn label_state(value: f64) -> Label {
    if value > LABEL_THRESHOLD {
        Label::Entangled
    } else {
        Label::NotDetected
    }
}

/// Margin form `max_i (|μ_i| − w_i)` with `w_i = 1/2 − λ_i`.
pub fn gmn_analytic(spec: &GhzDiagonalSpec) -> GmnResult {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, (l, m)) in spec.lambdas().iter().zip(spec.mus()).enumerate() {
        let w = 0.5 - l;
        let margin = crate::math::cabs(*m) - w;
        if margin > best {
            best = margin;
            arg = i;
        }
    }
    let value = best.max(0.0);
    GmnResult {
        value,
        argmax_index: arg,
        witness_margin: best,
        label: label_state(value),
    }
}

/// Fidelity form `max_i {0, F_i − 1/2}` with `F_i = λ_i + |μ_i|`.
pub fn gmn_from_fidelities(spec: &GhzDiagonalSpec) -> f64 {
    spec.lambdas()
        .iter()
        .zip(spec.mus())
        .map(|(l, m)| l + crate::math::cabs(*m) - 0.5)
        .fold(0.0, f64::max)
}

//! Genuine multipartite entanglement (GME) detection toolkit.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece:
//!
//! * [`statekit`] — density matrices, GHZ-diagonal states, random generation,
//!   white noise, GHZ fidelities and partial transposes.
//! * [`gmn`] — the closed-form renormalized genuine multipartite negativity of
//!   GHZ-diagonal states and the labeling rule.
//! * [`sdp`] — the witness semidefinite program for arbitrary small states,
//!   solved by an in-crate primal-dual interior-point method.
//! * [`featurize`] — conversion of states into 1-D classifier inputs.
//! * [`nn`] — a small deterministic CNN engine (conv1d, batchnorm, ReLU,
//!   max pooling, squeeze-and-excitation, dense, softmax cross-entropy, Adam).
//! * [`pipeline`] — dataset assembly, stratified splits, training and
//!   evaluation with false-positive / false-negative accounting.
//!
//! File formats, parallel fan-out and the command line live in the
//! `gme-detect` companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod featurize;
pub mod gmn;
pub mod linalg;
pub mod math;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sdp;
pub mod statekit;

pub use error::{Error, Result};
pub use gmn::{gmn_analytic, label_state, GmnResult, Label, LABEL_THRESHOLD};
pub use statekit::{Bipartition, DensityMatrix, GhzDiagonalSpec};

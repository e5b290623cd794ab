//! Dataset assembly, stratified splits, training, evaluation and repeats.

mod dataset;
mod eval;
mod experiment;
mod train;

pub use dataset::{
    build_dataset, candidate, candidate_state, entanglement_possible, split, BuildStats, Candidate, Dataset,
    DatasetBuilder, DatasetConfig, Labeler, Sample, State, MAX_CANDIDATES_PER_SAMPLE,
};
pub use eval::{evaluate, EvalReport};
pub use experiment::{
    bisect_noise_threshold, mean_sample_std, noise_threshold, repeat_experiment, run_once, split_seed, summarize, ArmSummary,
    RunReport, TRAIN_FRACTION,
};
pub use train::{train, Classifier, EpochRecord, TrainConfig, Trainer, DEFAULT_BATCH};

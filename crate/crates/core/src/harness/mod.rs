//! Repeated experiments over a spectrum of dataset pairs: similarity sweeps
//! with mean/SEM aggregation and the downstream turning-point comparison.
//!
//! Every (condition, repetition) cell uses the derived seed
//! `seed + condition_index * 1000 + rep`, so results do not depend on the
//! order in which cells run.

mod stats;
mod sweep;
mod turning;

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::data::{Dataset, DatasetError};
use crate::ingest::{IngestError, PatchSpec};
use crate::similarity::SimilarityError;
use crate::softmax::SoftmaxError;
use crate::synth::{GaussianPairSpec, PhantomPairSpec, SynthError};

pub use stats::MeanSem;
pub use sweep::{
    run_similarity_sweep, sweep_cell, write_histogram_csv, write_sweep_csv, ConditionSummary, PriorSummary, RepResult,
    SweepOptions, SweepResult, VerdictCounts, HISTOGRAM_BINS,
};
pub use turning::{run_turning_point, Budget, BudgetRow, TurningPointOptions, TurningPointResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("at least 2 repetitions are needed for a standard error, got {0}")]
    TooFewReps(usize),
    #[error("condition name {0:?} is used more than once")]
    DuplicateName(String),
    #[error("no conditions given")]
    NoConditions,
    #[error("no benchmark priors given")]
    NoPriors,
    #[error("condition {0:?} has no downstream class labels")]
    MissingLabels(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("condition {condition:?}, repetition {rep}: {source}")]
    Cell { condition: String, rep: usize, source: Box<HarnessError> },
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Softmax(#[from] SoftmaxError),
    #[error("{path}: {message}")]
    Output { path: String, message: String },
}

/// Where a condition's data comes from.
#[derive(Debug, Clone)]
pub enum ConditionSource {
    Gaussian(GaussianPairSpec),
    /// Phantom images, turned into patch datasets grouped by image.
    Phantom { spec: PhantomPairSpec, patches: PatchSpec },
    /// Fixed datasets; repetitions vary the cross-validation seed only.
    Data { training: Dataset, unseen: Dataset },
}

#[derive(Debug, Clone)]
pub struct Condition {
    pub name: String,
    /// Position on the similarity spectrum (for example the true shift).
    pub label: f64,
    pub source: ConditionSource,
}

impl Condition {
    pub fn gaussian(name: impl Into<String>, spec: GaussianPairSpec) -> Self {
        Condition { name: name.into(), label: spec.shift, source: ConditionSource::Gaussian(spec) }
    }
}

pub fn derived_seed(seed: u64, condition: usize, rep: usize) -> u64 {
    seed.wrapping_add(condition as u64 * 1000).wrapping_add(rep as u64)
}

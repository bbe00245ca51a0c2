//! Measures how representative a training dataset is of a new, unseen dataset.
//!
//! A domain classifier is trained to tell the two datasets apart. Its
//! cross-validated error gives the proxy A-distance, and a Beta fit of its
//! pooled held-out probabilities, compared against two reference Beta
//! distributions, gives the data representativeness criterion (DRC):
//! below 1 the training data is representative, above 1 it is not, and when
//! the datasets are (nearly) separable the fit is improper and the DRC is
//! undefined.

pub mod beta;
pub mod classifier;
pub mod data;
pub mod harness;
pub mod ingest;
pub mod similarity;
pub mod softmax;
pub mod special;
pub mod synth;

pub use beta::{fit_beta_mle, kl_beta, BetaError, BetaFit, BetaParams, FitMethod};
pub use classifier::{cross_validate, train_logistic, ClassifierError, ClassifierModel, CvOptions, DomainFitResult};
pub use data::{validate_dataset, Dataset, DatasetError, DomainTag, ProbabilitySet};
pub use similarity::{
    compare, drc, proxy_a_distance, verdict, ComparisonReport, DrcConfig, DrcOutcome, DrcStatus, SimilarityError,
    Verdict,
};

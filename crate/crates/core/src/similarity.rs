//! Proxy A-distance, the data representativeness criterion (DRC) and the
//! verdict derived from it.
//!
//! The DRC compares a Beta fit of pooled domain-classifier probabilities
//! against two reference Beta distributions: one describing what two similar
//! datasets look like (`bm1`) and one describing two dissimilar datasets
//! (`bm2`, uniform by default):
//!
//! ```text
//! DRC = KL(fit || bm1) / KL(fit || bm2)
//! ```
//!
//! Values below 1 mean the fit sits closer to the similar-datasets reference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beta::{fit_beta_mle, kl_beta, BetaError, BetaFit, BetaParams, FitMethod, DEFAULT_CLAMP_EPS};
use crate::classifier::{cross_validate, ClassifierError, CvOptions, DomainFitResult};
use crate::data::Dataset;

/// KL(fit || bm2) below this makes the ratio undefined.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("cross-validation error {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("benchmark priors must differ (both are {0})")]
    IdenticalBenchmarks(BetaParams),
    #[error("caution band must be a non-negative finite number, got {0}")]
    InvalidCautionBand(f64),
    #[error("properness threshold must be finite and non-negative, got {0}")]
    InvalidProperness(f64),
    #[error(transparent)]
    Beta(#[from] BetaError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// `max(0, 2·(1 - 2·cv_error))`.
pub fn proxy_a_distance(cv_error: f64) -> Result<f64, SimilarityError> {
    if !(0.0..=1.0).contains(&cv_error) {
        return Err(SimilarityError::OutOfRange(cv_error));
    }
    Ok((2.0 * (1.0 - 2.0 * cv_error)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrcConfig {
    pub bm1: BetaParams,
    pub bm2: BetaParams,
    pub caution_band: f64,
    pub properness_threshold: f64,
    pub clamp_eps: f64,
}

impl Default for DrcConfig {
    fn default() -> Self {
        DrcConfig {
            bm1: BetaParams::symmetric(25.0).expect("positive"),
            bm2: BetaParams::uniform(),
            caution_band: 0.1,
            properness_threshold: 1.0,
            clamp_eps: DEFAULT_CLAMP_EPS,
        }
    }
}

impl DrcConfig {
    pub fn with_bm1(mut self, bm1: BetaParams) -> Self {
        self.bm1 = bm1;
        self
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        if self.bm1 == self.bm2 {
            return Err(SimilarityError::IdenticalBenchmarks(self.bm1));
        }
        if !(self.caution_band >= 0.0 && self.caution_band.is_finite()) {
            return Err(SimilarityError::InvalidCautionBand(self.caution_band));
        }
        if !(self.properness_threshold >= 0.0 && self.properness_threshold.is_finite()) {
            return Err(SimilarityError::InvalidProperness(self.properness_threshold));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(BetaError::InvalidClamp(self.clamp_eps).into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DrcStatus {
    Computed,
    UndefinedImproperFit,
    UndefinedZeroDenominator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DrcOutcome {
    pub status: DrcStatus,
    pub value: Option<f64>,
    /// Beta fit of the pooled probabilities, when one was obtained.
    #[serde(skip)]
    pub fit: Option<BetaFit>,
}

impl DrcOutcome {
    fn undefined(status: DrcStatus, fit: Option<BetaFit>) -> Self {
        DrcOutcome { status, value: None, fit }
    }

    pub fn is_defined(&self) -> bool {
        self.status == DrcStatus::Computed
    }
}

/// KL(fit || bm1) / KL(fit || bm2) for a given fitted distribution.
pub fn drc_for_fit(fit: &BetaParams, config: &DrcConfig) -> (DrcStatus, Option<f64>) {
    if fit.alpha() <= config.properness_threshold || fit.beta() <= config.properness_threshold {
        return (DrcStatus::UndefinedImproperFit, None);
    }
    let denom = kl_beta(fit, &config.bm2);
    if denom < DENOMINATOR_GUARD {
        return (DrcStatus::UndefinedZeroDenominator, None);
    }
    (DrcStatus::Computed, Some(kl_beta(fit, &config.bm1) / denom))
}

/// Fits a Beta to the pooled probabilities and evaluates the DRC.
///
/// Fit failures (degenerate or too few values) are reported as
/// [`DrcStatus::UndefinedImproperFit`].
pub fn drc(probabilities: &[f64], config: &DrcConfig) -> Result<DrcOutcome, SimilarityError> {
    config.validate()?;
    let fit = match fit_beta_mle(probabilities, config.clamp_eps) {
        Ok(f) => f,
        Err(e @ BetaError::InvalidClamp(_)) | Err(e @ BetaError::OutOfRange { .. }) => return Err(e.into()),
        Err(e) => {
            log::debug!("beta fit failed: {e}");
            return Ok(DrcOutcome::undefined(DrcStatus::UndefinedImproperFit, None));
        }
    };
    let (status, value) = drc_for_fit(&fit.params, config);
    Ok(DrcOutcome { status, value, fit: Some(fit) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Representative,
    Caution,
    NotRepresentative,
    Separable,
}

impl Verdict {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Representative => 0,
            Verdict::Caution => 10,
            Verdict::NotRepresentative => 20,
            Verdict::Separable => 30,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Representative => "Representative",
            Verdict::Caution => "Caution",
            Verdict::NotRepresentative => "NotRepresentative",
            Verdict::Separable => "Separable",
        };
        f.write_str(s)
    }
}

pub fn verdict(outcome: &DrcOutcome, config: &DrcConfig) -> Verdict {
    match outcome.value {
        Some(v) if outcome.status == DrcStatus::Computed => {
            if v < 1.0 - config.caution_band {
                Verdict::Representative
            } else if v > 1.0 + config.caution_band {
                Verdict::NotRepresentative
            } else {
                Verdict::Caution
            }
        }
        _ => Verdict::Separable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub cv_error: f64,
    pub proxy_a: f64,
    pub fitted: Option<BetaParams>,
    pub fit_method: Option<FitMethod>,
    pub drc: DrcOutcome,
    pub verdict: Verdict,
    pub chosen_lambda: f64,
    pub samples_per_domain: usize,
    #[serde(skip)]
    pub domain_fit: DomainFitResult,
}

/// Domain classification followed by proxy A-distance, DRC and verdict.
pub fn compare(
    training: &Dataset,
    unseen: &Dataset,
    cv: &CvOptions,
    config: &DrcConfig,
) -> Result<ComparisonReport, SimilarityError> {
    config.validate()?;
    let domain_fit = cross_validate(training, unseen, cv)?;
    report_from_fit(domain_fit, config)
}

pub fn report_from_fit(domain_fit: DomainFitResult, config: &DrcConfig) -> Result<ComparisonReport, SimilarityError> {
    let proxy_a = proxy_a_distance(domain_fit.cv_error)?;
    let outcome = drc(domain_fit.probabilities.values(), config)?;
    Ok(ComparisonReport {
        cv_error: domain_fit.cv_error,
        proxy_a,
        fitted: outcome.fit.map(|f| f.params),
        fit_method: outcome.fit.map(|f| f.method),
        drc: outcome,
        verdict: verdict(&outcome, config),
        chosen_lambda: domain_fit.chosen_lambda,
        samples_per_domain: domain_fit.samples_per_domain,
        domain_fit,
    })
}

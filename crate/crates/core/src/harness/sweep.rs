use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{derived_seed, Condition, ConditionSource, HarnessError, MeanSem};
use crate::beta::{BetaParams, FitMethod};
use crate::classifier::{cross_validate, CvOptions};
use crate::data::{histogram, Dataset, DomainTag};
use crate::ingest::{patches_from_images, PatchSpec, Sampling};
use crate::similarity::{drc, proxy_a_distance, verdict, DrcConfig, DrcOutcome, DrcStatus, Verdict};
use crate::synth::{gen_gaussian_pair, gen_phantom_pair, LabeledImage};

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub reps: usize,
    /// Benchmark prior 1 candidates; each is evaluated on every repetition.
    pub bm1_list: Vec<BetaParams>,
    /// Supplies bm2, the caution band and the fit settings.
    pub config: DrcConfig,
    /// Folds and lambda grid; the seed is replaced by the derived cell seed.
    pub cv: CvOptions,
    pub seed: u64,
    /// Keep the pooled probabilities of every repetition.
    pub keep_probabilities: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            reps: 20,
            bm1_list: [25.0, 50.0, 100.0, 200.0, 300.0, 400.0]
                .iter()
                .map(|&a| BetaParams::symmetric(a).expect("positive"))
                .collect(),
            config: DrcConfig::default(),
            cv: CvOptions::default(),
            seed: 0,
            keep_probabilities: false,
        }
    }
}

/// One repetition of one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub cv_error: f64,
    pub proxy_a: f64,
    pub fitted: Option<BetaParams>,
    pub fit_method: Option<FitMethod>,
    pub chosen_lambda: f64,
    pub samples_per_domain: usize,
    /// One outcome per entry of the bm1 list.
    pub drc: Vec<DrcOutcome>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
    #[serde(skip)]
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct VerdictCounts {
    pub representative: usize,
    pub caution: usize,
    pub not_representative: usize,
    pub separable: usize,
}

impl VerdictCounts {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Representative => self.representative += 1,
            Verdict::Caution => self.caution += 1,
            Verdict::NotRepresentative => self.not_representative += 1,
            Verdict::Separable => self.separable += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriorSummary {
    pub bm1: BetaParams,
    /// Over repetitions with a computed DRC only.
    pub drc: Option<MeanSem>,
    pub n_computed: usize,
    pub n_improper_fit: usize,
    pub n_zero_denominator: usize,
    pub verdicts: VerdictCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionSummary {
    pub name: String,
    pub label: f64,
    pub cv_error: MeanSem,
    pub proxy_a: MeanSem,
    pub priors: Vec<PriorSummary>,
    /// Pooled-probability counts over [0, 1], summed over repetitions.
    pub histogram: Vec<u64>,
    pub reps: Vec<RepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub reps: usize,
    pub seed: u64,
    pub bm2: BetaParams,
    pub caution_band: f64,
    pub conditions: Vec<ConditionSummary>,
}

fn phantom_datasets(images: &[LabeledImage], patches: &PatchSpec, tag: DomainTag) -> Result<Dataset, HarnessError> {
    let named: Vec<(String, _)> =
        images.iter().enumerate().map(|(i, li)| (format!("image{i:03}"), li.image.clone())).collect();
    Ok(patches_from_images(&named, patches, tag)?)
}

fn cell_data(source: &ConditionSource, seed: u64) -> Result<(Dataset, Dataset), HarnessError> {
    match source {
        ConditionSource::Gaussian(spec) => Ok(gen_gaussian_pair(&crate::synth::GaussianPairSpec { seed, ..*spec })?),
        ConditionSource::Phantom { spec, patches } => {
            let pair = gen_phantom_pair(&crate::synth::PhantomPairSpec { seed, ..*spec })?;
            let patches = match patches.sampling {
                Sampling::Random { count, .. } => PatchSpec { size: patches.size, sampling: Sampling::Random { count, seed } },
                Sampling::All => *patches,
            };
            Ok((
                phantom_datasets(&pair.training, &patches, DomainTag::Training)?,
                phantom_datasets(&pair.unseen, &patches, DomainTag::Unseen)?,
            ))
        }
        ConditionSource::Data { training, unseen } => Ok((training.clone(), unseen.clone())),
    }
}

/// Runs a single repetition with an explicit seed.
pub fn sweep_cell(condition: &Condition, rep: usize, seed: u64, opts: &SweepOptions) -> Result<RepResult, HarnessError> {
    let (training, unseen) = cell_data(&condition.source, seed)?;
    let cv = CvOptions { seed, ..opts.cv.clone() };
    let fit = cross_validate(&training, &unseen, &cv)?;
    let proxy_a = proxy_a_distance(fit.cv_error)?;
    let probs = fit.probabilities.values();
    let mut outcomes = Vec::with_capacity(opts.bm1_list.len());
    let mut verdicts = Vec::with_capacity(opts.bm1_list.len());
    for bm1 in &opts.bm1_list {
        let config = opts.config.with_bm1(*bm1);
        let outcome = drc(probs, &config)?;
        verdicts.push(verdict(&outcome, &config));
        outcomes.push(outcome);
    }
    let first_fit = outcomes.first().and_then(|o| o.fit);
    Ok(RepResult {
        rep,
        seed,
        cv_error: fit.cv_error,
        proxy_a,
        fitted: first_fit.map(|f| f.params),
        fit_method: first_fit.map(|f| f.method),
        chosen_lambda: fit.chosen_lambda,
        samples_per_domain: fit.samples_per_domain,
        drc: outcomes,
        verdicts,
        probabilities: opts.keep_probabilities.then(|| probs.to_vec()),
        histogram: histogram(probs, HISTOGRAM_BINS),
    })
}

pub(crate) fn summarize(condition: &Condition, bm1_list: &[BetaParams], reps: Vec<RepResult>) -> ConditionSummary {
    let cv: Vec<f64> = reps.iter().map(|r| r.cv_error).collect();
    let pa: Vec<f64> = reps.iter().map(|r| r.proxy_a).collect();
    let priors = bm1_list
        .iter()
        .enumerate()
        .map(|(j, bm1)| {
            let values: Vec<f64> = reps.iter().filter_map(|r| r.drc[j].value).collect();
            let mut verdicts = VerdictCounts::default();
            reps.iter().for_each(|r| verdicts.add(r.verdicts[j]));
            let count = |s: DrcStatus| reps.iter().filter(|r| r.drc[j].status == s).count();
            PriorSummary {
                bm1: *bm1,
                drc: MeanSem::of(&values),
                n_computed: values.len(),
                n_improper_fit: count(DrcStatus::UndefinedImproperFit),
                n_zero_denominator: count(DrcStatus::UndefinedZeroDenominator),
                verdicts,
            }
        })
        .collect();
    let mut hist = vec![0u64; HISTOGRAM_BINS];
    for r in &reps {
        hist.iter_mut().zip(&r.histogram).for_each(|(a, b)| *a += b);
    }
    ConditionSummary {
        name: condition.name.clone(),
        label: condition.label,
        cv_error: MeanSem::of(&cv).expect("reps >= 2"),
        proxy_a: MeanSem::of(&pa).expect("reps >= 2"),
        priors,
        histogram: hist,
        reps,
    }
}

pub fn run_similarity_sweep(conditions: &[Condition], opts: &SweepOptions) -> Result<SweepResult, HarnessError> {
    if opts.reps < 2 {
        return Err(HarnessError::TooFewReps(opts.reps));
    }
    if conditions.is_empty() {
        return Err(HarnessError::NoConditions);
    }
    if opts.bm1_list.is_empty() {
        return Err(HarnessError::NoPriors);
    }
    let mut seen = HashSet::new();
    if let Some(c) = conditions.iter().find(|c| !seen.insert(c.name.as_str())) {
        return Err(HarnessError::DuplicateName(c.name.clone()));
    }
    opts.config.validate()?;
    for bm1 in &opts.bm1_list {
        opts.config.with_bm1(*bm1).validate()?;
    }

    let cells: Vec<(usize, usize)> =
        (0..conditions.len()).flat_map(|c| (0..opts.reps).map(move |r| (c, r))).collect();
    let results: Vec<RepResult> = cells
        .par_iter()
        .map(|&(c, r)| {
            let seed = derived_seed(opts.seed, c, r);
            sweep_cell(&conditions[c], r, seed, opts).map_err(|e| HarnessError::Cell {
                condition: conditions[c].name.clone(),
                rep: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let mut results = results.into_iter();
    let summaries = conditions
        .iter()
        .map(|c| summarize(c, &opts.bm1_list, results.by_ref().take(opts.reps).collect()))
        .collect();
    Ok(SweepResult {
        reps: opts.reps,
        seed: opts.seed,
        bm2: opts.config.bm2,
        caution_band: opts.config.caution_band,
        conditions: summaries,
    })
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Output { path: path.display().to_string(), message: e.to_string() }
}

/// One row per condition x repetition x benchmark prior.
pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record([
        "condition", "label", "rep", "seed", "cv_error", "proxy_a", "fit_alpha", "fit_beta", "fit_method",
        "bm1_alpha", "bm1_beta", "drc_status", "drc_value", "verdict",
    ])
    .map_err(|e| output_error(path, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &result.conditions {
        for r in &c.reps {
            for (p, (o, v)) in c.priors.iter().zip(r.drc.iter().zip(&r.verdicts)) {
                let method = match r.fit_method {
                    Some(FitMethod::Newton) => "newton",
                    Some(FitMethod::MomentsFallback) => "moments_fallback",
                    None => "",
                };
                let status = match o.status {
                    DrcStatus::Computed => "Computed",
                    DrcStatus::UndefinedImproperFit => "UndefinedImproperFit",
                    DrcStatus::UndefinedZeroDenominator => "UndefinedZeroDenominator",
                };
                w.write_record([
                    c.name.clone(),
                    c.label.to_string(),
                    r.rep.to_string(),
                    r.seed.to_string(),
                    r.cv_error.to_string(),
                    r.proxy_a.to_string(),
                    opt(r.fitted.map(|f| f.alpha())),
                    opt(r.fitted.map(|f| f.beta())),
                    method.to_string(),
                    p.bm1.alpha().to_string(),
                    p.bm1.beta().to_string(),
                    status.to_string(),
                    opt(o.value),
                    v.to_string(),
                ])
                .map_err(|e| output_error(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| output_error(path, e))
}

/// Per-condition histogram of pooled probabilities over 50 bins on [0, 1].
pub fn write_histogram_csv(path: &Path, result: &SweepResult) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record(["condition", "bin_lo", "bin_hi", "count"]).map_err(|e| output_error(path, e))?;
    let width = 1.0 / HISTOGRAM_BINS as f64;
    for c in &result.conditions {
        for (i, n) in c.histogram.iter().enumerate() {
            w.write_record([
                c.name.clone(),
                (i as f64 * width).to_string(),
                ((i + 1) as f64 * width).to_string(),
                n.to_string(),
            ])
            .map_err(|e| output_error(path, e))?;
        }
    }
    w.flush().map_err(|e| output_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::GaussianPairSpec;

    fn small_opts(reps: usize) -> SweepOptions {
        SweepOptions {
            reps,
            bm1_list: vec![BetaParams::symmetric(25.0).unwrap(), BetaParams::symmetric(100.0).unwrap()],
            cv: CvOptions { lambda_grid: vec![0.01, 1.0, 100.0], ..Default::default() },
            ..Default::default()
        }
    }

    fn gauss(name: &str, d: f64) -> Condition {
        Condition::gaussian(name, GaussianPairSpec { dim: 2, shift: d, n_per_domain: 200, seed: 0 })
    }

    #[test]
    fn rejects_single_rep_and_duplicates() {
        let c = [gauss("a", 0.0)];
        assert!(matches!(run_similarity_sweep(&c, &small_opts(1)), Err(HarnessError::TooFewReps(1))));
        let c = [gauss("a", 0.0), gauss("a", 1.0)];
        assert!(matches!(run_similarity_sweep(&c, &small_opts(2)), Err(HarnessError::DuplicateName(_))));
        assert!(matches!(run_similarity_sweep(&[], &small_opts(2)), Err(HarnessError::NoConditions)));
    }

    #[test]
    fn identical_cells_have_zero_sem() {
        let c = gauss("a", 1.0);
        let opts = small_opts(2);
        let r0 = sweep_cell(&c, 0, 42, &opts).unwrap();
        let r1 = sweep_cell(&c, 1, 42, &opts).unwrap();
        let s = summarize(&c, &opts.bm1_list, vec![r0, r1]);
        assert_eq!(s.cv_error.sem, Some(0.0));
        assert_eq!(s.proxy_a.sem, Some(0.0));
    }

    #[test]
    fn structure_and_seeds() {
        let c = [gauss("near", 0.0), gauss("far", 10.0)];
        let opts = small_opts(3);
        let r = run_similarity_sweep(&c, &opts).unwrap();
        assert_eq!(r.conditions.len(), 2);
        let far = &r.conditions[1];
        assert_eq!(far.reps.iter().map(|x| x.seed).collect::<Vec<_>>(), vec![1000, 1001, 1002]);
        assert_eq!(far.priors.len(), 2);
        assert_eq!(far.priors[0].verdicts.separable, 3);
        assert_eq!(far.histogram.iter().sum::<u64>(), 3 * 800);
        let dir = tempfile::tempdir().unwrap();
        write_sweep_csv(&dir.path().join("rows.csv"), &r).unwrap();
        write_histogram_csv(&dir.path().join("hist.csv"), &r).unwrap();
        let rows = std::fs::read_to_string(dir.path().join("rows.csv")).unwrap();
        assert_eq!(rows.lines().count(), 1 + 2 * 3 * 2);
        let hist = std::fs::read_to_string(dir.path().join("hist.csv")).unwrap();
        assert_eq!(hist.lines().count(), 1 + 2 * HISTOGRAM_BINS);
    }
}

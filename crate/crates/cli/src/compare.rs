use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use drc_core::classifier::{default_lambda_grid, LambdaScore};
use drc_core::ingest::{load_csv, load_image_dir, patches_from_images, PatchSpec, Sampling, DEFAULT_PATCH_SIZE};
use drc_core::{compare, BetaParams, CvOptions, Dataset, DomainTag, DrcConfig, DrcStatus, FitMethod, Verdict};
use serde::Serialize;

use crate::output::{timestamp, write_json};
use crate::{AnalysisArgs, CompareArgs, ConfigArgs, Modality, PatchArgs, TOOL_VERSION};

/// Random patches per image when `--patches-per-image` is not given.
pub(crate) const DEFAULT_PATCHES_PER_IMAGE: usize = 200;

fn path_modality(path: &Path) -> Result<Modality> {
    let meta = std::fs::metadata(path).with_context(|| format!("{}", path.display()))?;
    Ok(if meta.is_dir() { Modality::Images } else { Modality::Csv })
}

fn describe(m: Modality) -> &'static str {
    match m {
        Modality::Csv => "a CSV file",
        Modality::Images => "an image directory",
    }
}

/// Checks that every input exists and has the same modality.
pub(crate) fn resolve_modality(paths: &[(&str, &Path)], requested: Option<Modality>) -> Result<Modality> {
    let mut found = Vec::with_capacity(paths.len());
    for (role, p) in paths {
        found.push((*role, *p, path_modality(p)?));
    }
    let expected = requested.unwrap_or(found[0].2);
    if let Some((role, p, m)) = found.iter().find(|(_, _, m)| *m != expected) {
        bail!(
            "ModalityMismatch: {role} input {} is {} but {} was expected",
            p.display(),
            describe(*m),
            describe(expected)
        );
    }
    Ok(expected)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ResolvedPatches {
    pub patch_size: usize,
    /// `None` keeps every patch.
    pub patches_per_image: Option<usize>,
}

impl ResolvedPatches {
    pub fn from_args(a: &PatchArgs) -> Self {
        let per_image = a.patches_per_image.unwrap_or(DEFAULT_PATCHES_PER_IMAGE);
        ResolvedPatches {
            patch_size: a.patch_size.unwrap_or(DEFAULT_PATCH_SIZE),
            patches_per_image: (per_image > 0).then_some(per_image),
        }
    }

    pub fn spec(&self, seed: u64) -> PatchSpec {
        let sampling = match self.patches_per_image {
            Some(count) => Sampling::Random { count, seed },
            None => Sampling::All,
        };
        PatchSpec { size: self.patch_size, sampling }
    }
}

pub(crate) fn load_input(
    path: &Path,
    modality: Modality,
    tag: DomainTag,
    patches: &ResolvedPatches,
    seed: u64,
) -> Result<Dataset> {
    let data = match modality {
        Modality::Csv => load_csv(path, tag)?,
        Modality::Images => {
            let images = load_image_dir(path)?;
            patches_from_images(&images, &patches.spec(seed), tag)
                .with_context(|| format!("extracting patches from {}", path.display()))?
        }
    };
    Ok(data)
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ResolvedAnalysis {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub bm2: BetaParams,
    pub caution_band: f64,
    pub seed: u64,
}

impl ResolvedAnalysis {
    pub fn from_args(a: &AnalysisArgs) -> Self {
        let defaults = DrcConfig::default();
        ResolvedAnalysis {
            folds: a.folds.unwrap_or(CvOptions::default().folds),
            lambda_grid: a.lambda_grid.clone().map_or_else(default_lambda_grid, |l| l.0),
            bm2: a.bm2.map_or(defaults.bm2, |b| b.0),
            caution_band: a.caution_band.unwrap_or(defaults.caution_band),
            seed: a.seed.unwrap_or(0),
        }
    }

    pub fn cv(&self) -> CvOptions {
        CvOptions { folds: self.folds, lambda_grid: self.lambda_grid.clone(), seed: self.seed }
    }

    pub fn drc_config(&self, bm1: BetaParams) -> Result<DrcConfig> {
        let config = DrcConfig { bm1, bm2: self.bm2, caution_band: self.caution_band, ..DrcConfig::default() };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Serialize)]
struct ConfigEcho {
    training: PathBuf,
    unseen: PathBuf,
    modality: Modality,
    #[serde(flatten)]
    patches: Option<ResolvedPatches>,
    bm1: BetaParams,
    #[serde(flatten)]
    analysis: ResolvedAnalysis,
}

#[derive(Debug, Serialize)]
struct FittedBeta {
    alpha: f64,
    beta: f64,
}

#[derive(Debug, Serialize)]
struct DrcJson {
    status: DrcStatus,
    value: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CompareReport<'a> {
    tool_version: &'static str,
    generated_at: String,
    seed: u64,
    config_echo: &'a ConfigEcho,
    cv_error: f64,
    proxy_a: f64,
    fitted_beta: Option<FittedBeta>,
    fit_method: Option<FitMethod>,
    drc: DrcJson,
    verdict: Verdict,
    chosen_lambda: f64,
    samples_per_domain: usize,
    non_converged_fits: usize,
    lambda_scores: &'a [LambdaScore],
}

pub fn cmd_compare(args: CompareArgs) -> Result<i32> {
    let args = args.resolve()?;
    let training = args.training.clone().ok_or_else(|| anyhow!("missing --training"))?;
    let unseen = args.unseen.clone().ok_or_else(|| anyhow!("missing --unseen"))?;
    let modality = resolve_modality(&[("training", &training), ("unseen", &unseen)], args.modality)?;
    let analysis = ResolvedAnalysis::from_args(&args.analysis);
    let patches = (modality == Modality::Images).then(|| ResolvedPatches::from_args(&args.patches));
    let bm1 = args.bm1.map_or(DrcConfig::default().bm1, |b| b.0);
    let config = analysis.drc_config(bm1)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("drc-report.json"));

    let patch_cfg = patches.clone().unwrap_or_else(|| ResolvedPatches::from_args(&PatchArgs::default()));
    let t = load_input(&training, modality, DomainTag::Training, &patch_cfg, analysis.seed)?;
    let u = load_input(&unseen, modality, DomainTag::Unseen, &patch_cfg, analysis.seed)?;
    let report = compare(&t, &u, &analysis.cv(), &config)?;

    let echo = ConfigEcho { training, unseen, modality, patches, bm1, analysis };
    let json = CompareReport {
        tool_version: TOOL_VERSION,
        generated_at: timestamp(),
        seed: echo.analysis.seed,
        config_echo: &echo,
        cv_error: report.cv_error,
        proxy_a: report.proxy_a,
        fitted_beta: report.fitted.map(|p| FittedBeta { alpha: p.alpha(), beta: p.beta() }),
        fit_method: report.fit_method,
        drc: DrcJson { status: report.drc.status, value: report.drc.value },
        verdict: report.verdict,
        chosen_lambda: report.chosen_lambda,
        samples_per_domain: report.samples_per_domain,
        non_converged_fits: report.domain_fit.non_converged_fits,
        lambda_scores: &report.domain_fit.lambda_scores,
    };
    write_json(&out, &json)?;

    let drc_text = match report.drc.value {
        Some(v) => format!("DRC {v:.4}"),
        None => format!("DRC undefined ({:?})", report.drc.status),
    };
    println!(
        "{}: {drc_text}, proxy-A {:.4}, cv_error {:.4}",
        report.verdict, report.proxy_a, report.cv_error
    );
    Ok(report.verdict.exit_code())
}

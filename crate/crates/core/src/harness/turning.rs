use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derived_seed, Condition, ConditionSource, HarnessError, MeanSem};
use crate::data::DomainTag;
use crate::ingest::{extract_patches_with_centers, PatchSpec, Sampling};
use crate::softmax::train_softmax;
use crate::synth::{gen_phantom_pair, LabeledImage, PhantomPairSpec};

const N_CLASSES: usize = 3;

/// Unseen-domain training patches drawn from each unseen training image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    PerImage(usize),
    All,
}

impl std::fmt::Display for Budget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Budget::PerImage(n) => write!(f, "{n}"),
            Budget::All => f.write_str("all"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPointOptions {
    pub budgets: Vec<Budget>,
    pub reps: usize,
    pub seed: u64,
    pub patch_size: usize,
    /// `None` uses every training-domain patch.
    pub training_patches_per_image: Option<usize>,
    /// Unseen images held out for evaluation (the last ones generated).
    pub test_images: usize,
    pub test_patches_per_image: Option<usize>,
    /// L2 strength of the downstream softmax classifier.
    pub lambda: f64,
}

impl Default for TurningPointOptions {
    fn default() -> Self {
        TurningPointOptions {
            budgets: vec![Budget::PerImage(10), Budget::PerImage(100), Budget::PerImage(300), Budget::All],
            reps: 10,
            seed: 0,
            patch_size: 9,
            training_patches_per_image: None,
            test_images: 2,
            test_patches_per_image: Some(500),
            lambda: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetRow {
    pub budget: Budget,
    /// Mean number of unseen-domain training samples per repetition.
    pub unseen_samples: f64,
    pub training_plus_unseen: MeanSem,
    pub unseen_only: MeanSem,
    pub training_plus_unseen_errors: Vec<f64>,
    pub unseen_only_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurningPointResult {
    pub condition: String,
    pub options: TurningPointOptions,
    pub rows: Vec<BudgetRow>,
}

struct Labeled {
    x: Vec<f64>,
    y: Vec<usize>,
}

impl Labeled {
    fn matrix(&self, width: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.y.len(), width, &self.x)
    }
}

fn labeled_patches(
    images: &[LabeledImage],
    size: usize,
    per_image: Option<usize>,
    seed: u64,
) -> Result<Labeled, HarnessError> {
    let mut out = Labeled { x: Vec::new(), y: Vec::new() };
    for (i, img) in images.iter().enumerate() {
        let sampling = match per_image {
            Some(count) => Sampling::Random { count, seed: seed.wrapping_add(i as u64) },
            None => Sampling::All,
        };
        let (d, centers) = extract_patches_with_centers(&img.image, &PatchSpec { size, sampling }, DomainTag::Unseen)?;
        out.x.extend_from_slice(d.values());
        out.y.extend(centers.iter().map(|&(r, c)| img.class_at(r, c) as usize));
    }
    Ok(out)
}

struct RepErrors {
    unseen_samples: Vec<usize>,
    combined: Vec<f64>,
    unseen_only: Vec<f64>,
}

fn run_rep(spec: &PhantomPairSpec, opts: &TurningPointOptions, seed: u64) -> Result<RepErrors, HarnessError> {
    let pair = gen_phantom_pair(&PhantomPairSpec { seed, ..*spec })?;
    let width = opts.patch_size * opts.patch_size;
    let n_train_u = pair.unseen.len() - opts.test_images;
    let t = labeled_patches(&pair.training, opts.patch_size, opts.training_patches_per_image, seed)?;
    let test = labeled_patches(
        &pair.unseen[n_train_u..],
        opts.patch_size,
        opts.test_patches_per_image,
        seed.wrapping_add(500),
    )?;
    let x_test = test.matrix(width);

    let per_budget: Vec<(usize, f64, f64)> = opts
        .budgets
        .par_iter()
        .map(|b| {
            let per_image = match b {
                Budget::PerImage(n) => Some(*n),
                Budget::All => None,
            };
            let u = labeled_patches(&pair.unseen[..n_train_u], opts.patch_size, per_image, seed.wrapping_add(1000))?;
            let only = train_softmax(&u.matrix(width), &u.y, N_CLASSES, opts.lambda)?;
            let mut x = t.x.clone();
            x.extend_from_slice(&u.x);
            let mut y = t.y.clone();
            y.extend_from_slice(&u.y);
            let both = train_softmax(&DMatrix::from_row_slice(y.len(), width, &x), &y, N_CLASSES, opts.lambda)?;
            Ok((u.y.len(), both.error_rate(&x_test, &test.y), only.error_rate(&x_test, &test.y)))
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(RepErrors {
        unseen_samples: per_budget.iter().map(|r| r.0).collect(),
        combined: per_budget.iter().map(|r| r.1).collect(),
        unseen_only: per_budget.iter().map(|r| r.2).collect(),
    })
}

/// Compares a downstream classifier trained on all training-domain data
/// plus `b` unseen-domain samples with one trained on the `b` unseen
/// samples alone, both scored on held-out unseen images. Repetition `r`
/// uses seed `seed + r`.
pub fn run_turning_point(condition: &Condition, opts: &TurningPointOptions) -> Result<TurningPointResult, HarnessError> {
    let ConditionSource::Phantom { spec, .. } = &condition.source else {
        return Err(HarnessError::MissingLabels(condition.name.clone()));
    };
    if opts.reps < 2 {
        return Err(HarnessError::TooFewReps(opts.reps));
    }
    if opts.budgets.is_empty() {
        return Err(HarnessError::InvalidOption("empty budget grid".into()));
    }
    if opts.budgets.contains(&Budget::PerImage(0)) {
        return Err(HarnessError::InvalidOption("budgets must be positive".into()));
    }
    if opts.test_images == 0 || opts.test_images >= spec.n_images_per_domain {
        return Err(HarnessError::InvalidOption(format!(
            "test_images must be in 1..{}, got {}",
            spec.n_images_per_domain, opts.test_images
        )));
    }
    if opts.patch_size.is_multiple_of(2) {
        return Err(HarnessError::InvalidOption(format!("patch size must be odd, got {}", opts.patch_size)));
    }
    spec.validate()?;

    let reps: Vec<RepErrors> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            run_rep(spec, opts, derived_seed(opts.seed, 0, r)).map_err(|e| HarnessError::Cell {
                condition: condition.name.clone(),
                rep: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<_, _>>()?;

    let rows = opts
        .budgets
        .iter()
        .enumerate()
        .map(|(j, &budget)| {
            let combined: Vec<f64> = reps.iter().map(|r| r.combined[j]).collect();
            let unseen_only: Vec<f64> = reps.iter().map(|r| r.unseen_only[j]).collect();
            BudgetRow {
                budget,
                unseen_samples: reps.iter().map(|r| r.unseen_samples[j] as f64).sum::<f64>() / reps.len() as f64,
                training_plus_unseen: MeanSem::of(&combined).expect("reps >= 2"),
                unseen_only: MeanSem::of(&unseen_only).expect("reps >= 2"),
                training_plus_unseen_errors: combined,
                unseen_only_errors: unseen_only,
            }
        })
        .collect();
    Ok(TurningPointResult { condition: condition.name.clone(), options: opts.clone(), rows })
}

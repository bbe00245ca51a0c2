//! L2-regularized logistic regression used as the domain classifier, and the
//! group-aware cross-validation that produces the held-out error and the pooled
//! probability set.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Dataset, DatasetError, DomainTag, ProbabilitySet};

pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_NEWTON_ITER: usize = 200;
pub const DEFAULT_FOLDS: usize = 5;
const MAX_FOLD_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("labels contain a single class")]
    SingleClassInput,
    #[error("regularization strength must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("{rows} feature rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("newton did not converge (gradient max-norm {gradient_norm:e} after {iterations} iterations)")]
    NonConvergence { gradient_norm: f64, iterations: usize, model: Box<ClassifierModel> },
    #[error("need at least {needed} samples per domain for {folds} folds, smallest domain has {available}")]
    TooFewSamplesForFolds { needed: usize, available: usize, folds: usize },
    #[error("could not build folds with both domains in every training split after {attempts} reshuffles")]
    SingleClassFold { attempts: u64 },
    #[error("both datasets carry the {0:?} tag")]
    TagConflict(DomainTag),
    #[error("fold count must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("empty regularization grid")]
    EmptyLambdaGrid,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Per-column affine scaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on the rows of `x`. Constant columns get scale 1.
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        out
    }
}

/// Fitted binary logistic model; predicts the probability of label 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl ClassifierModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>() + self.intercept
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn predict_proba_matrix(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let w = DVector::from_column_slice(&self.weights);
        (x * w).iter().map(|z| sigmoid(z + self.intercept)).collect()
    }

    pub fn converged(&self) -> bool {
        self.gradient_norm < GRADIENT_TOL
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn objective(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, b: f64, lambda: f64) -> f64 {
    let z = x * w;
    let n = y.len() as f64;
    let data: f64 = z.iter().zip(y).map(|(zi, yi)| softplus(zi + b) - yi * (zi + b)).sum::<f64>() / n;
    data + 0.5 * lambda * w.norm_squared()
}

/// Minimizes mean cross-entropy + (lambda / 2)·‖w‖² (intercept unpenalized)
/// with damped Newton steps.
///
/// Iterates until the gradient max-norm drops below [`GRADIENT_TOL`] or
/// [`MAX_NEWTON_ITER`] steps. A non-converged fit is returned inside
/// [`ClassifierError::NonConvergence`].
pub fn train_logistic(x: &DMatrix<f64>, labels: &[u8], lambda: f64) -> Result<ClassifierModel, ClassifierError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ClassifierError::InvalidLambda(lambda));
    }
    if x.nrows() != labels.len() {
        return Err(ClassifierError::ShapeMismatch { rows: x.nrows(), labels: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(ClassifierError::SingleClassInput);
    }

    let n = x.nrows();
    let d = x.ncols();
    let nf = n as f64;
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let mut w = DVector::<f64>::zeros(d);
    let mut b = 0.0;
    let mut loss = objective(x, &y, &w, b, lambda);
    let mut iterations = 0;
    let mut gnorm;

    loop {
        let z = x * &w;
        let p: Vec<f64> = z.iter().map(|zi| sigmoid(zi + b)).collect();
        let resid = DVector::from_iterator(n, p.iter().zip(&y).map(|(pi, yi)| pi - yi));
        let grad_w = x.tr_mul(&resid) / nf + &w * lambda;
        let grad_b = resid.sum() / nf;
        gnorm = grad_w.amax().max(grad_b.abs());
        if gnorm < GRADIENT_TOL || iterations >= MAX_NEWTON_ITER {
            break;
        }
        iterations += 1;

        // Hessian of [w; b] built from the augmented design
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut weighted = x.clone();
        let curv: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= curv[i];
        }
        let xtwx = x.tr_mul(&weighted) / nf;
        hess.view_mut((0, 0), (d, d)).copy_from(&xtwx);
        let xtw1 = weighted.row_sum_tr() / nf;
        hess.view_mut((0, d), (d, 1)).copy_from(&xtw1);
        hess.view_mut((d, 0), (1, d)).copy_from(&xtw1.transpose());
        hess[(d, d)] = curv.iter().sum::<f64>() / nf;
        for j in 0..d {
            hess[(j, j)] += lambda;
        }
        let mut grad = DVector::<f64>::zeros(d + 1);
        grad.rows_mut(0, d).copy_from(&grad_w);
        grad[d] = grad_b;

        let step = solve_spd(hess, &grad);
        let dw = -step.rows(0, d).into_owned();
        let db = -step[d];
        let slope = -grad.dot(&step);

        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let nw = &w + &dw * t;
            let nb = b + db * t;
            let nloss = objective(x, &y, &nw, nb, lambda);
            if nloss <= loss + 1e-4 * t * slope {
                w = nw;
                b = nb;
                loss = nloss;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // step collapsed to rounding level; recompute the final gradient and stop
            let z = x * &w;
            let resid = DVector::from_iterator(n, z.iter().zip(&y).map(|(zi, yi)| sigmoid(zi + b) - yi));
            let gw = x.tr_mul(&resid) / nf + &w * lambda;
            gnorm = gw.amax().max((resid.sum() / nf).abs());
            break;
        }
    }

    let model = ClassifierModel {
        weights: w.iter().copied().collect(),
        intercept: b,
        lambda,
        iterations,
        gradient_norm: gnorm,
    };
    if gnorm < GRADIENT_TOL {
        Ok(model)
    } else {
        Err(ClassifierError::NonConvergence { gradient_norm: gnorm, iterations, model: Box::new(model) })
    }
}

/// Solves H s = g for symmetric positive (semi)definite H, adding diagonal
/// jitter if the Cholesky factorization fails.
fn solve_spd(hess: DMatrix<f64>, grad: &DVector<f64>) -> DVector<f64> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut jitter = 0.0;
    loop {
        let mut h = hess.clone();
        for j in 0..h.nrows() {
            h[(j, j)] += jitter;
        }
        if let Some(chol) = h.cholesky() {
            return chol.solve(grad);
        }
        jitter = if jitter == 0.0 { scale * 1e-12 } else { jitter * 10.0 };
    }
}

/// Keeps the result of a non-converged fit, logging the gradient norm.
fn fit_lenient(x: &DMatrix<f64>, labels: &[u8], lambda: f64) -> Result<(ClassifierModel, bool), ClassifierError> {
    match train_logistic(x, labels, lambda) {
        Ok(m) => Ok((m, true)),
        Err(ClassifierError::NonConvergence { gradient_norm, model, .. }) => {
            log::warn!("logistic fit at lambda {lambda:e} stopped with gradient norm {gradient_norm:e}");
            Ok((*model, false))
        }
        Err(e) => Err(e),
    }
}

/// `count` values log-spaced over [lo, hi].
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (l, h) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(l + (h - l) * i as f64 / (count - 1) as f64))
        .collect()
}

pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(1e-4, 1e4, 9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvOptions {
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { folds: DEFAULT_FOLDS, lambda_grid: default_lambda_grid(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_fold_error: f64,
    pub mean_fold_log_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainFitResult {
    /// Refit on all balanced samples at the chosen lambda.
    pub model: ClassifierModel,
    pub standardizer: Standardizer,
    pub cv_error: f64,
    pub fold_errors: Vec<f64>,
    #[serde(skip)]
    pub probabilities: ProbabilitySet,
    pub chosen_lambda: f64,
    pub lambda_scores: Vec<LambdaScore>,
    pub samples_per_domain: usize,
    pub non_converged_fits: usize,
}

/// Balanced pool of both domains: rows, labels and group keys.
struct Pool {
    x: DMatrix<f64>,
    /// 0 for rows of the first dataset, 1 for the second.
    labels: Vec<u8>,
    /// Group key per row, namespaced by argument position so groups never span domains.
    groups: Vec<(usize, String)>,
}

fn balanced_indices(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if n == m {
        return (0..n).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

fn build_pool(a: &Dataset, b: &Dataset, seed: u64) -> Result<Pool, ClassifierError> {
    let m = a.n_samples().min(b.n_samples());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ia = balanced_indices(a.n_samples(), m, &mut rng);
    let ib = balanced_indices(b.n_samples(), m, &mut rng);
    let d = a.n_features();
    let mut x = DMatrix::<f64>::zeros(2 * m, d);
    let mut labels = Vec::with_capacity(2 * m);
    let mut groups = Vec::with_capacity(2 * m);
    for (pos, (ds, idx)) in [(a, &ia), (b, &ib)].into_iter().enumerate() {
        for &i in idx {
            let r = labels.len();
            for (j, v) in ds.row(i).iter().enumerate() {
                x[(r, j)] = *v;
            }
            labels.push(pos as u8);
            let key = ds.group_of(i).map_or_else(|| format!("#{i}"), str::to_owned);
            groups.push((pos, key));
        }
    }
    Ok(Pool { x, labels, groups })
}

/// Assigns every row to a fold. Groups stay together; within each domain the
/// shuffled groups go to the fold currently holding the fewest rows of that
/// domain, which stratifies by domain. Ties go to the fold with the fewest
/// rows overall so that small group counts still cover every fold.
fn assign_folds(pool: &Pool, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![usize::MAX; pool.labels.len()];
    let mut total = vec![0usize; k];
    for domain in 0..2 {
        let mut order: Vec<&(usize, String)> = Vec::new();
        let mut members: HashMap<&(usize, String), Vec<usize>> = HashMap::new();
        for (i, g) in pool.groups.iter().enumerate() {
            if g.0 != domain {
                continue;
            }
            let entry = members.entry(g).or_default();
            if entry.is_empty() {
                order.push(g);
            }
            entry.push(i);
        }
        order.shuffle(&mut rng);
        let mut load = vec![0usize; k];
        for g in order {
            let f = (0..k).min_by_key(|&f| (load[f], total[f], f)).unwrap_or(0);
            for &i in &members[g] {
                fold_of[i] = f;
            }
            load[f] += members[g].len();
            total[f] += members[g].len();
        }
    }
    fold_of
}

fn folds_usable(labels: &[u8], fold_of: &[usize], k: usize) -> bool {
    (0..k).all(|f| {
        let held = fold_of.iter().filter(|&&g| g == f).count();
        let train_pos = labels.iter().zip(fold_of).filter(|(&l, &g)| g != f && l == 1).count();
        let train_neg = labels.iter().zip(fold_of).filter(|(&l, &g)| g != f && l == 0).count();
        held > 0 && train_pos > 0 && train_neg > 0
    })
}

fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows)
}

/// Misclassification count with a prediction of exactly 0.5 counted as half an error.
fn error_count(probs: &[f64], labels: &[u8]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            if p == 0.5 {
                0.5
            } else if (p > 0.5) != (l == 1) {
                1.0
            } else {
                0.0
            }
        })
        .sum()
}

fn mean_log_loss(probs: &[f64], labels: &[u8]) -> f64 {
    let eps = 1e-15;
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &l)| {
            let q = if l == 1 { p } else { 1.0 - p };
            -q.clamp(eps, 1.0).ln()
        })
        .sum();
    total / probs.len() as f64
}

struct FoldOutcome {
    error: f64,
    log_loss: f64,
    held_out: Vec<usize>,
    probs: Vec<f64>,
    converged: bool,
}

fn run_fold(pool: &Pool, fold_of: &[usize], fold: usize, lambda: f64) -> Result<FoldOutcome, ClassifierError> {
    let train: Vec<usize> = (0..fold_of.len()).filter(|&i| fold_of[i] != fold).collect();
    let held_out: Vec<usize> = (0..fold_of.len()).filter(|&i| fold_of[i] == fold).collect();
    let xtr_raw = select_rows(&pool.x, &train);
    let scaler = Standardizer::fit(&xtr_raw);
    let xtr = scaler.transform(&xtr_raw);
    let ytr: Vec<u8> = train.iter().map(|&i| pool.labels[i]).collect();
    let (model, converged) = fit_lenient(&xtr, &ytr, lambda)?;
    let xte = scaler.transform(&select_rows(&pool.x, &held_out));
    let probs = model.predict_proba_matrix(&xte);
    let yte: Vec<u8> = held_out.iter().map(|&i| pool.labels[i]).collect();
    let error = error_count(&probs, &yte) / held_out.len() as f64;
    let log_loss = mean_log_loss(&probs, &yte);
    Ok(FoldOutcome { error, log_loss, held_out, probs, converged })
}

/// Index of the selected lambda.
///
/// Lambdas whose mean fold error is within one standard error (over folds)
/// of the minimum count as tied; ties go to the lowest held-out log-loss,
/// then to the larger lambda. Misclassification error is nearly flat in
/// lambda when few features are present, while the calibration of the
/// pooled probabilities is not, so exact-minimum selection would pick the
/// probability scale essentially at random.
fn select_lambda(scores: &[LambdaScore], fold_errors: impl Fn(usize) -> Vec<f64>) -> usize {
    let argmin = (0..scores.len())
        .min_by(|&i, &j| scores[i].mean_fold_error.total_cmp(&scores[j].mean_fold_error))
        .unwrap_or(0);
    let errs = fold_errors(argmin);
    let k = errs.len() as f64;
    let m = scores[argmin].mean_fold_error;
    let se = if k > 1.0 {
        (errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt() / k.sqrt()
    } else {
        0.0
    };
    let mut best = argmin;
    for (i, s) in scores.iter().enumerate() {
        if s.mean_fold_error > m + se {
            continue;
        }
        let cur = &scores[best];
        if s.mean_fold_log_loss < cur.mean_fold_log_loss
            || (s.mean_fold_log_loss == cur.mean_fold_log_loss && s.lambda > cur.lambda)
        {
            best = i;
        }
    }
    best
}

/// k-fold cross-validated domain classification of `a` against `b`.
///
/// The two datasets must carry different tags. Reported probabilities and
/// the refit model give the probability of the Unseen domain. The fit itself
/// only depends on argument order, so swapping tags while keeping argument
/// order yields the same cv_error and mirrors every probability exactly.
pub fn cross_validate(a: &Dataset, b: &Dataset, opts: &CvOptions) -> Result<DomainFitResult, ClassifierError> {
    if a.tag() == b.tag() {
        return Err(ClassifierError::TagConflict(a.tag()));
    }
    if a.n_features() != b.n_features() {
        return Err(DatasetError::FeatureCountMismatch { left: a.n_features(), right: b.n_features() }.into());
    }
    let k = opts.folds;
    if k < 2 {
        return Err(ClassifierError::InvalidFolds(k));
    }
    if opts.lambda_grid.is_empty() {
        return Err(ClassifierError::EmptyLambdaGrid);
    }
    if let Some(&bad) = opts.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(ClassifierError::InvalidLambda(bad));
    }
    let smallest = a.n_samples().min(b.n_samples());
    if smallest < k {
        return Err(ClassifierError::TooFewSamplesForFolds { needed: k, available: smallest, folds: k });
    }

    let pool = build_pool(a, b, opts.seed)?;
    let fold_of = (0..MAX_FOLD_ATTEMPTS)
        .map(|attempt| assign_folds(&pool, k, opts.seed.wrapping_add(attempt)))
        .find(|f| folds_usable(&pool.labels, f, k))
        .ok_or(ClassifierError::SingleClassFold { attempts: MAX_FOLD_ATTEMPTS })?;

    let jobs: Vec<(usize, usize)> = (0..opts.lambda_grid.len())
        .flat_map(|li| (0..k).map(move |f| (li, f)))
        .collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(li, f)| run_fold(&pool, &fold_of, f, opts.lambda_grid[li]))
        .collect::<Result<_, _>>()?;

    let fold_errors_at = |li: usize| outcomes[li * k..(li + 1) * k].iter().map(|o| o.error);
    let lambda_scores: Vec<LambdaScore> = opts
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(li, &lambda)| {
            let folds = &outcomes[li * k..(li + 1) * k];
            LambdaScore {
                lambda,
                mean_fold_error: folds.iter().map(|o| o.error).sum::<f64>() / k as f64,
                mean_fold_log_loss: folds.iter().map(|o| o.log_loss).sum::<f64>() / k as f64,
            }
        })
        .collect();
    let best = select_lambda(&lambda_scores, |li| fold_errors_at(li).collect());
    let chosen = &outcomes[best * k..(best + 1) * k];
    let chosen_lambda = opts.lambda_grid[best];
    let fold_errors: Vec<f64> = chosen.iter().map(|o| o.error).collect();
    let cv_error = fold_errors.iter().sum::<f64>() / k as f64;

    let mut pooled = vec![f64::NAN; pool.labels.len()];
    for o in chosen {
        for (&i, &p) in o.held_out.iter().zip(&o.probs) {
            pooled[i] = p;
        }
    }
    let first_is_unseen = a.tag() == DomainTag::Unseen;
    if first_is_unseen {
        pooled.iter_mut().for_each(|p| *p = 1.0 - *p);
    }
    let probabilities = ProbabilitySet::from_positive_class(&pooled)?;

    let standardizer = Standardizer::fit(&pool.x);
    let (mut model, full_converged) = fit_lenient(&standardizer.transform(&pool.x), &pool.labels, chosen_lambda)?;
    if first_is_unseen {
        model.weights.iter_mut().for_each(|w| *w = -*w);
        model.intercept = -model.intercept;
    }
    let non_converged_fits = outcomes.iter().filter(|o| !o.converged).count() + usize::from(!full_converged);

    Ok(DomainFitResult {
        model,
        standardizer,
        cv_error,
        fold_errors,
        probabilities,
        chosen_lambda,
        lambda_scores,
        samples_per_domain: smallest,
        non_converged_fits,
    })
}

//! Multiclass logistic (softmax) regression with an L2 penalty, fitted by
//! L-BFGS. Used as the downstream tissue classifier.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::classifier::Standardizer;

const MAX_ITER: usize = 500;
const HISTORY: usize = 10;
const GRAD_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SoftmaxError {
    #[error("need at least one training sample")]
    Empty,
    #[error("{rows} rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("label {label} is not below the class count {classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("lambda must be finite and >= 0, got {0}")]
    InvalidLambda(f64),
}

/// Fitted model. Features are standardized with training statistics before
/// the linear map; the intercepts are not penalized.
#[derive(Debug, Clone, Serialize)]
pub struct SoftmaxModel {
    #[serde(skip)]
    standardizer: Standardizer,
    /// `classes x (features + 1)`, intercept in the last column.
    #[serde(skip)]
    coef: DMatrix<f64>,
    pub n_classes: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl SoftmaxModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let scores = self.scores(&self.standardizer.transform(x));
        scores
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                    .0
            })
            .collect()
    }

    /// Fraction of rows whose predicted class differs from `labels`.
    pub fn error_rate(&self, x: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let pred = self.predict(x);
        let wrong = pred.iter().zip(labels).filter(|(p, l)| p != l).count();
        wrong as f64 / labels.len().max(1) as f64
    }

    fn scores(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        scores(&self.coef, z)
    }
}

fn scores(coef: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    let p = z.ncols();
    let w = coef.columns(0, p);
    let mut s = z * w.transpose();
    for mut row in s.row_iter_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v += coef[(k, p)];
        }
    }
    s
}

/// Mean cross-entropy + lambda/2 * |W|^2 and its gradient.
fn objective(coef: &DMatrix<f64>, z: &DMatrix<f64>, labels: &[usize], lambda: f64) -> (f64, DMatrix<f64>) {
    let n = z.nrows() as f64;
    let p = z.ncols();
    let mut s = scores(coef, z);
    let mut loss = 0.0;
    for (i, mut row) in s.row_iter_mut().enumerate() {
        let m = row.max();
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        row[labels[i]] -= 1.0;
    }
    // s now holds (softmax - onehot)
    let mut grad = DMatrix::zeros(coef.nrows(), p + 1);
    grad.columns_mut(0, p).copy_from(&(s.transpose() * z));
    for k in 0..coef.nrows() {
        grad[(k, p)] = s.column(k).sum();
    }
    grad /= n;
    let w = coef.columns(0, p);
    let mut gw = grad.columns_mut(0, p);
    gw += lambda * w;
    (loss / n + 0.5 * lambda * w.norm_squared(), grad)
}

pub fn train_softmax(
    x: &DMatrix<f64>,
    labels: &[usize],
    n_classes: usize,
    lambda: f64,
) -> Result<SoftmaxModel, SoftmaxError> {
    if x.nrows() == 0 {
        return Err(SoftmaxError::Empty);
    }
    if x.nrows() != labels.len() {
        return Err(SoftmaxError::ShapeMismatch { rows: x.nrows(), labels: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(SoftmaxError::LabelOutOfRange { label, classes: n_classes });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(SoftmaxError::InvalidLambda(lambda));
    }
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let shape = (n_classes, z.ncols() + 1);
    let flat = |m: &DMatrix<f64>| DVector::from_column_slice(m.as_slice());
    let unflat = |v: &DVector<f64>| DMatrix::from_column_slice(shape.0, shape.1, v.as_slice());

    let mut theta = DVector::zeros(shape.0 * shape.1);
    let (mut f, g) = objective(&unflat(&theta), &z, labels, lambda);
    let mut g = flat(&g);
    let mut hist: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::with_capacity(HISTORY);
    let mut iterations = 0;

    while iterations < MAX_ITER && g.amax() > GRAD_TOL {
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = -q;
        if dir.dot(&g) >= 0.0 {
            dir = -g.clone();
            hist.clear();
        }

        let slope = dir.dot(&g);
        let mut step = if hist.is_empty() { 1.0 / g.norm().max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &theta + step * &dir;
            let (fc, gc) = objective(&unflat(&cand), &z, labels, lambda);
            if fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, flat(&gc)));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let s = &cand - &theta;
        let y = &gc - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            if hist.len() == HISTORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        theta = cand;
        f = fc;
        g = gc;
    }

    Ok(SoftmaxModel {
        standardizer,
        coef: unflat(&theta),
        n_classes,
        iterations,
        gradient_norm: g.amax(),
    })
}

//! Beta distributions: maximum-likelihood fitting and closed-form KL divergence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{digamma, entropy_kernel, ln_beta, trigamma};

pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BetaError {
    #[error("beta shape parameters must be positive and finite (alpha = {alpha}, beta = {beta})")]
    NonPositiveShape { alpha: f64, beta: f64 },
    #[error("need at least 4 values to fit a beta distribution, got {0}")]
    TooFewValues(usize),
    #[error("all values are equal after clamping; variance is zero")]
    DegenerateVariance,
    #[error("clamp epsilon must lie in (0, 0.5), got {0}")]
    InvalidClamp(f64),
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

/// Shape pair (alpha, beta) of a proper Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBeta")]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct RawBeta {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawBeta> for BetaParams {
    type Error = BetaError;

    fn try_from(raw: RawBeta) -> Result<Self, Self::Error> {
        BetaParams::new(raw.alpha, raw.beta)
    }
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, BetaError> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(BetaParams { alpha, beta })
        } else {
            Err(BetaError::NonPositiveShape { alpha, beta })
        }
    }

    /// Symmetric Beta(a, a).
    pub fn symmetric(a: f64) -> Result<Self, BetaError> {
        Self::new(a, a)
    }

    pub fn uniform() -> Self {
        BetaParams { alpha: 1.0, beta: 1.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Log density at `x` in (0, 1).
    pub fn ln_pdf(&self, x: f64) -> f64 {
        (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (-x).ln_1p() - ln_beta(self.alpha, self.beta)
    }

    /// Distribution of `1 - X`.
    pub fn reflected(&self) -> Self {
        BetaParams { alpha: self.beta, beta: self.alpha }
    }
}

impl std::fmt::Display for BetaParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Beta({}, {})", self.alpha, self.beta)
    }
}

/// How the returned parameters were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Newton,
    /// Newton produced a non-finite iterate; the method-of-moments start is returned.
    MomentsFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaFit {
    pub params: BetaParams,
    pub method: FitMethod,
    pub iterations: usize,
    /// Mean per-sample log-likelihood at `params`.
    pub log_likelihood: f64,
}

/// Sufficient statistics of clamped data for the Beta likelihood.
#[derive(Debug, Clone, Copy)]
struct SuffStats {
    mean_ln_x: f64,
    mean_ln_1mx: f64,
}

impl SuffStats {
    fn log_likelihood(&self, a: f64, b: f64) -> f64 {
        (a - 1.0) * self.mean_ln_x + (b - 1.0) * self.mean_ln_1mx - ln_beta(a, b)
    }
}

/// Mean per-sample Beta log-likelihood of `values` (clamped into
/// `[clamp_eps, 1 - clamp_eps]`) at `params`.
pub fn mean_log_likelihood(values: &[f64], params: &BetaParams, clamp_eps: f64) -> f64 {
    let n = values.len() as f64;
    let (s1, s2) = values.iter().fold((0.0, 0.0), |(s1, s2), &v| {
        let x = v.clamp(clamp_eps, 1.0 - clamp_eps);
        (s1 + x.ln(), s2 + (-x).ln_1p())
    });
    SuffStats { mean_ln_x: s1 / n, mean_ln_1mx: s2 / n }.log_likelihood(params.alpha, params.beta)
}

/// Method-of-moments shape estimates for mean `m` and variance `v`.
pub fn moments_estimate(m: f64, v: f64) -> (f64, f64) {
    let common = m * (1.0 - m) / v - 1.0;
    (m * common, (1.0 - m) * common)
}

/// Two-parameter maximum-likelihood Beta fit.
///
/// Values are clamped into `[clamp_eps, 1 - clamp_eps]`. Newton iterations
/// start from the method-of-moments estimate and only accept steps that do not
/// lower the likelihood.
pub fn fit_beta_mle(values: &[f64], clamp_eps: f64) -> Result<BetaFit, BetaError> {
    if !(clamp_eps > 0.0 && clamp_eps < 0.5) {
        return Err(BetaError::InvalidClamp(clamp_eps));
    }
    if values.len() < 4 {
        return Err(BetaError::TooFewValues(values.len()));
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(BetaError::OutOfRange { index, value });
    }
    let n = values.len() as f64;
    let clamped: Vec<f64> = values.iter().map(|v| v.clamp(clamp_eps, 1.0 - clamp_eps)).collect();
    let m = clamped.iter().sum::<f64>() / n;
    let var = clamped.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    // summation rounding leaves constant data with a tiny positive variance
    if clamped.iter().all(|&x| x == clamped[0]) || var.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(BetaError::DegenerateVariance);
    }
    let stats = SuffStats {
        mean_ln_x: clamped.iter().map(|x| x.ln()).sum::<f64>() / n,
        mean_ln_1mx: clamped.iter().map(|x| (-x).ln_1p()).sum::<f64>() / n,
    };

    let (a0, b0) = moments_estimate(m, var);
    // v < m(1-m) holds for clamped data, but rounding can break it at the edges
    let (a0, b0) = if a0 > 0.0 && b0 > 0.0 && a0.is_finite() && b0.is_finite() {
        (a0, b0)
    } else {
        (f64::EPSILON.max(m * 1e-3), f64::EPSILON.max((1.0 - m) * 1e-3))
    };
    let start = BetaParams { alpha: a0, beta: b0 };
    let ll0 = stats.log_likelihood(a0, b0);
    let fallback = BetaFit { params: start, method: FitMethod::MomentsFallback, iterations: 0, log_likelihood: ll0 };
    if !ll0.is_finite() {
        return Ok(fallback);
    }

    let (mut a, mut b, mut ll) = (a0, b0, ll0);
    let mut iterations = 0;
    while iterations < NEWTON_MAX_ITER {
        iterations += 1;
        let psi_ab = digamma(a + b);
        let ga = stats.mean_ln_x - digamma(a) + psi_ab;
        let gb = stats.mean_ln_1mx - digamma(b) + psi_ab;
        let tri_ab = trigamma(a + b);
        let haa = tri_ab - trigamma(a);
        let hbb = tri_ab - trigamma(b);
        let hab = tri_ab;
        let det = haa * hbb - hab * hab;
        if !(ga.is_finite() && gb.is_finite() && det.is_finite()) || det == 0.0 {
            log::debug!("beta newton: non-finite derivatives at ({a}, {b}); falling back to moments");
            return Ok(fallback);
        }
        // Newton direction -H^{-1} g
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(haa * gb - hab * ga) / det;
        if !(da.is_finite() && db.is_finite()) {
            return Ok(fallback);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let (na, nb) = (a + t * da, b + t * db);
            if na > 0.0 && nb > 0.0 {
                let nll = stats.log_likelihood(na, nb);
                // ln B carries ~1e-15 noise, so near the optimum equality is judged loosely
                if nll.is_finite() && nll >= ll - 1e-13 * ll.abs().max(1.0) {
                    accepted = Some((na, nb, nll));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((na, nb, nll)) = accepted else {
            // no ascent left at working precision
            break;
        };
        let step = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        ll = nll;
        if step < NEWTON_TOL {
            break;
        }
    }

    if ll < ll0 {
        return Ok(BetaFit { method: FitMethod::Newton, iterations, ..fallback });
    }
    Ok(BetaFit { params: BetaParams { alpha: a, beta: b }, method: FitMethod::Newton, iterations, log_likelihood: ll })
}

/// KL(p1 || p2) between two Beta distributions in closed form.
///
/// Evaluated as the negative entropy of `p1` plus its cross-entropy against
/// `p2`, which keeps full precision when `p1` is extremely concentrated.
/// Tiny negative results from cancellation are clamped to zero.
pub fn kl_beta(p1: &BetaParams, p2: &BetaParams) -> f64 {
    if p1 == p2 {
        return 0.0;
    }
    let (a1, b1) = (p1.alpha, p1.beta);
    let (a2, b2) = (p2.alpha, p2.beta);
    let s1 = a1 + b1;
    let psi_s1 = digamma(s1);
    let neg_entropy = entropy_kernel(a1) + entropy_kernel(b1) - entropy_kernel(s1) + psi_s1;
    let cross = ln_beta(a2, b2) - (a2 - 1.0) * (digamma(a1) - psi_s1) - (b2 - 1.0) * (digamma(b1) - psi_s1);
    (neg_entropy + cross).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Beta as BetaDist, Distribution};

    fn sample(alpha: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = BetaDist::new(alpha, beta).unwrap();
        (0..n).map(|_| dist.sample(&mut rng)).collect()
    }

    #[test]
    fn rejects_non_positive_shapes() {
        assert!(BetaParams::new(0.0, 1.0).is_err());
        assert!(BetaParams::new(1.0, -2.0).is_err());
        assert!(BetaParams::new(f64::NAN, 1.0).is_err());
        assert!(serde_json::from_str::<BetaParams>(r#"{"alpha":-1,"beta":1}"#).is_err());
    }

    #[test]
    fn moments_start_for_uniform_spread() {
        let (a, b) = moments_estimate(0.5, 1.0 / 12.0);
        assert_relative_eq!(a, 1.0, max_relative = 1e-14);
        assert_relative_eq!(b, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn constant_values_are_degenerate() {
        assert_eq!(fit_beta_mle(&[0.5; 10], DEFAULT_CLAMP_EPS), Err(BetaError::DegenerateVariance));
    }

    #[test]
    fn too_few_values() {
        assert_eq!(fit_beta_mle(&[0.1, 0.2, 0.3], DEFAULT_CLAMP_EPS), Err(BetaError::TooFewValues(3)));
    }

    #[test]
    fn recovers_beta_2_5() {
        let xs = sample(2.0, 5.0, 10_000, 11);
        let fit = fit_beta_mle(&xs, DEFAULT_CLAMP_EPS).unwrap();
        assert_eq!(fit.method, FitMethod::Newton);
        assert_relative_eq!(fit.params.alpha(), 2.0, max_relative = 0.05);
        assert_relative_eq!(fit.params.beta(), 5.0, max_relative = 0.05);
    }

    #[test]
    fn mle_score_vanishes_at_solution() {
        let xs = sample(0.7, 3.0, 5_000, 3);
        let fit = fit_beta_mle(&xs, DEFAULT_CLAMP_EPS).unwrap();
        let (a, b) = (fit.params.alpha(), fit.params.beta());
        let n = xs.len() as f64;
        let s1 = xs.iter().map(|x| x.clamp(1e-6, 1.0 - 1e-6).ln()).sum::<f64>() / n;
        let s2 = xs.iter().map(|x| (-x.clamp(1e-6, 1.0 - 1e-6)).ln_1p()).sum::<f64>() / n;
        let g1 = s1 - digamma(a) + digamma(a + b);
        let g2 = s2 - digamma(b) + digamma(a + b);
        assert!(g1.abs() < 1e-9 && g2.abs() < 1e-9, "{fit:?} {g1} {g2}");
    }

    #[test]
    fn kl_identical_is_zero() {
        assert_eq!(kl_beta(&BetaParams::uniform(), &BetaParams::uniform()), 0.0);
    }

    #[test]
    fn kl_reflection_symmetry() {
        for (a, b, c, d) in [(25.0, 25.0, 1.0, 1.0), (3.0, 7.0, 2.0, 2.0)] {
            let p = BetaParams::new(a, b).unwrap();
            let q = BetaParams::new(c, d).unwrap();
            assert_relative_eq!(kl_beta(&p, &q), kl_beta(&p.reflected(), &q.reflected()), max_relative = 1e-12);
        }
    }

    #[test]
    fn kl_stays_accurate_for_concentrated_fits() {
        // Beta(A, A) approaches N(1/2, 1/(8A)), whose negative entropy is ln(8A / (2 pi e)) / 2
        for a in [1e6, 1e9, 3e11] {
            let kl = kl_beta(&BetaParams::symmetric(a).unwrap(), &BetaParams::uniform());
            let normal = 0.5 * (8.0 * a / (2.0 * std::f64::consts::PI * std::f64::consts::E)).ln();
            assert!((kl - normal).abs() < 1e-5, "A = {a}: {kl} vs {normal}");
        }
        // nearly identical huge fits give nearly identical divergences
        let bm1 = BetaParams::symmetric(25.0).unwrap();
        let p = BetaParams::new(298903928673.6082, 298903928673.6081).unwrap();
        let q = BetaParams::new(298903928673.6918, 298903928673.69183).unwrap();
        assert!((kl_beta(&p, &bm1) - kl_beta(&q, &bm1)).abs() < 1e-10);
    }

    #[test]
    fn kl_against_uniform_is_negative_entropy() {
        // KL(p || U) = -H(p)
        let p = BetaParams::new(2.0, 2.0).unwrap();
        let h = ln_beta(2.0, 2.0) - 2.0 * digamma(2.0) + 2.0 * digamma(4.0);
        assert_relative_eq!(kl_beta(&p, &BetaParams::uniform()), -h, max_relative = 1e-12);
        assert_relative_eq!(-h, 0.125_092_802_561_386_6, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative_and_zero_on_diagonal(a in 0.05f64..500.0, b in 0.05f64..500.0,
                                                    c in 0.05f64..500.0, d in 0.05f64..500.0) {
            let p = BetaParams::new(a, b).unwrap();
            let q = BetaParams::new(c, d).unwrap();
            prop_assert!(kl_beta(&p, &q) >= 0.0);
            prop_assert!(kl_beta(&p, &p).abs() < 1e-9);
        }

        #[test]
        fn newton_never_worse_than_moments(alpha in 0.3f64..40.0, beta in 0.3f64..40.0, seed in 0u64..1000) {
            let xs = sample(alpha, beta, 400, seed);
            let fit = fit_beta_mle(&xs, DEFAULT_CLAMP_EPS).unwrap();
            let n = xs.len() as f64;
            let m = xs.iter().map(|x| x.clamp(1e-6, 1.0 - 1e-6)).sum::<f64>() / n;
            let v = xs.iter().map(|x| { let x = x.clamp(1e-6, 1.0 - 1e-6); (x - m) * (x - m) }).sum::<f64>() / n;
            let (a0, b0) = moments_estimate(m, v);
            let start = BetaParams::new(a0, b0).unwrap();
            let ll_start = mean_log_likelihood(&xs, &start, DEFAULT_CLAMP_EPS);
            prop_assert!(fit.log_likelihood >= ll_start - 1e-12);
            prop_assert!((mean_log_likelihood(&xs, &fit.params, DEFAULT_CLAMP_EPS) - fit.log_likelihood).abs() < 1e-9);
        }
    }
}

//! Synthetic Training/Unseen pairs with controllable dissimilarity.
//!
//! Gaussian pairs have an analytic Bayes error of `Phi(-d/2)`. Phantom pairs
//! are grayscale images of three concentric tissue classes; the unseen
//! domain passes through an acquisition transform
//! `x -> clamp((g*x)^gamma) + noise` (gain, then gamma, clamp to [0, 1], then
//! additive Gaussian noise). Noisy intensities are clipped to [0, 1] again so
//! every image stays a valid graymap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, DatasetError, DomainTag};
use crate::ingest::{GrayImage, IngestError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPairSpec {
    pub dim: usize,
    /// Mean separation along the first axis.
    pub shift: f64,
    pub n_per_domain: usize,
    pub seed: u64,
}

impl GaussianPairSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.dim == 0 || self.n_per_domain == 0 {
            return Err(SynthError::InvalidSpec("dim and n_per_domain must be positive".into()));
        }
        if !(self.shift.is_finite() && self.shift >= 0.0) {
            return Err(SynthError::InvalidSpec(format!("shift must be finite and >= 0, got {}", self.shift)));
        }
        Ok(())
    }
}

/// Training ~ N(0, I), Unseen ~ N((d, 0, ..., 0), I).
pub fn gen_gaussian_pair(spec: &GaussianPairSpec) -> Result<(Dataset, Dataset), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_per_domain * spec.dim;
    let t: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut u: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for row in u.chunks_exact_mut(spec.dim) {
        row[0] += spec.shift;
    }
    Ok((
        Dataset::from_flat(t, spec.dim, DomainTag::Training)?,
        Dataset::from_flat(u, spec.dim, DomainTag::Unseen)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionTransform {
    pub gain: f64,
    pub gamma: f64,
    pub noise_sigma: f64,
}

impl AcquisitionTransform {
    pub fn identity(noise_sigma: f64) -> Self {
        AcquisitionTransform { gain: 1.0, gamma: 1.0, noise_sigma }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = self.gain > 0.0 && self.gamma > 0.0 && self.noise_sigma >= 0.0;
        if !ok || !(self.gain.is_finite() && self.gamma.is_finite() && self.noise_sigma.is_finite()) {
            return Err(SynthError::InvalidSpec(format!(
                "need gain > 0, gamma > 0, noise_sigma >= 0 (got {}, {}, {})",
                self.gain, self.gamma, self.noise_sigma
            )));
        }
        Ok(())
    }

    /// Noise-free part of the transform.
    pub fn intensity(&self, x: f64) -> f64 {
        (self.gain * x).powf(self.gamma).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomPairSpec {
    pub image_size: usize,
    pub n_images_per_domain: usize,
    /// Intensities of the inner, middle and outer region.
    pub tissue_means: [f64; 3],
    /// Noise of the training domain, whose transform is otherwise the identity.
    pub training_noise_sigma: f64,
    /// Transform applied to the unseen domain.
    pub transform: AcquisitionTransform,
    pub seed: u64,
}

impl Default for PhantomPairSpec {
    fn default() -> Self {
        PhantomPairSpec {
            image_size: 48,
            n_images_per_domain: 10,
            tissue_means: [0.2, 0.5, 0.8],
            training_noise_sigma: 0.05,
            transform: AcquisitionTransform::identity(0.05),
            seed: 0,
        }
    }
}

impl PhantomPairSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.image_size < 8 || self.n_images_per_domain == 0 {
            return Err(SynthError::InvalidSpec("image_size must be >= 8 and n_images_per_domain > 0".into()));
        }
        if self.tissue_means.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(SynthError::InvalidSpec("tissue_means must lie in [0, 1]".into()));
        }
        if !(self.training_noise_sigma.is_finite() && self.training_noise_sigma >= 0.0) {
            return Err(SynthError::InvalidSpec("training_noise_sigma must be >= 0".into()));
        }
        self.transform.validate()
    }
}

/// Class label of background pixels.
pub const BACKGROUND: u8 = u8::MAX;

/// A phantom image with its mask and per-pixel tissue class (0, 1, 2 or
/// [`BACKGROUND`]).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub classes: Vec<u8>,
}

impl LabeledImage {
    pub fn class_at(&self, row: usize, col: usize) -> u8 {
        self.classes[row * self.image.width() + col]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPair {
    pub training: Vec<LabeledImage>,
    pub unseen: Vec<LabeledImage>,
}

struct Anatomy {
    center: (f64, f64),
    radii: [f64; 3],
}

impl Anatomy {
    // Three concentric regions of equal area, with per-image jitter.
    fn sample(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = size as f64;
        let jitter = |rng: &mut ChaCha8Rng, w: f64| rng.random_range(-w..=w);
        let center = (s / 2.0 + jitter(rng, 0.04 * s), s / 2.0 + jitter(rng, 0.04 * s));
        let outer = 0.42 * s * (1.0 + jitter(rng, 0.06));
        let r1 = outer / 3f64.sqrt() * (1.0 + jitter(rng, 0.03));
        let r2 = outer * (2.0f64 / 3.0).sqrt() * (1.0 + jitter(rng, 0.03));
        Anatomy { center, radii: [r1, r2, outer] }
    }

    fn class_map(&self, size: usize) -> Vec<u8> {
        let mut out = vec![BACKGROUND; size * size];
        for r in 0..size {
            for c in 0..size {
                let dy = r as f64 + 0.5 - self.center.0;
                let dx = c as f64 + 0.5 - self.center.1;
                let dist = (dx * dx + dy * dy).sqrt();
                if let Some(k) = self.radii.iter().position(|&rad| dist < rad) {
                    out[r * size + c] = k as u8;
                }
            }
        }
        out
    }
}

fn render(
    classes: &[u8],
    size: usize,
    means: &[f64; 3],
    transform: &AcquisitionTransform,
    rng: &mut ChaCha8Rng,
) -> Result<LabeledImage, SynthError> {
    let noise = Normal::new(0.0, transform.noise_sigma).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let pixels = classes
        .iter()
        .map(|&k| {
            let base = if k == BACKGROUND { 0.0 } else { means[k as usize] };
            (transform.intensity(base) + noise.sample(rng)).clamp(0.0, 1.0)
        })
        .collect();
    let mask = classes.iter().map(|&k| k != BACKGROUND).collect();
    let image = GrayImage::new(size, size, pixels)?.with_mask(mask)?;
    Ok(LabeledImage { image, classes: classes.to_vec() })
}

/// Image `i` of both domains shares one anatomy drawn from `seed + i`; the
/// two domains use independent noise streams.
pub fn gen_phantom_pair(spec: &PhantomPairSpec) -> Result<PhantomPair, SynthError> {
    spec.validate()?;
    let t_transform = AcquisitionTransform::identity(spec.training_noise_sigma);
    let pairs: Vec<(LabeledImage, LabeledImage)> = (0..spec.n_images_per_domain)
        .into_par_iter()
        .map(|i| {
            let image_seed = spec.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed);
            let classes = Anatomy::sample(spec.image_size, &mut rng).class_map(spec.image_size);
            rng.set_stream(1);
            let t = render(&classes, spec.image_size, &spec.tissue_means, &t_transform, &mut rng)?;
            rng.set_stream(2);
            rng.set_word_pos(0);
            let u = render(&classes, spec.image_size, &spec.tissue_means, &spec.transform, &mut rng)?;
            Ok((t, u))
        })
        .collect::<Result<_, SynthError>>()?;
    let (training, unseen) = pairs.into_iter().unzip();
    Ok(PhantomPair { training, unseen })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_shapes_and_shift() {
        let spec = GaussianPairSpec { dim: 3, shift: 4.0, n_per_domain: 2000, seed: 1 };
        let (t, u) = gen_gaussian_pair(&spec).unwrap();
        assert_eq!((t.n_samples(), t.n_features()), (2000, 3));
        assert_eq!(u.tag(), DomainTag::Unseen);
        let mean = |d: &Dataset, j: usize| d.rows().map(|r| r[j]).sum::<f64>() / d.n_samples() as f64;
        assert!(mean(&t, 0).abs() < 0.1);
        assert!((mean(&u, 0) - 4.0).abs() < 0.1);
        assert!(mean(&u, 1).abs() < 0.1);
    }

    #[test]
    fn gaussian_is_deterministic() {
        let spec = GaussianPairSpec { dim: 2, shift: 1.0, n_per_domain: 50, seed: 9 };
        assert_eq!(gen_gaussian_pair(&spec).unwrap(), gen_gaussian_pair(&spec).unwrap());
        let other = GaussianPairSpec { seed: 10, ..spec };
        assert_ne!(gen_gaussian_pair(&spec).unwrap(), gen_gaussian_pair(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(gen_gaussian_pair(&GaussianPairSpec { dim: 0, shift: 0.0, n_per_domain: 1, seed: 0 }).is_err());
        assert!(gen_gaussian_pair(&GaussianPairSpec { dim: 1, shift: -1.0, n_per_domain: 1, seed: 0 }).is_err());
        let mut p = PhantomPairSpec::default();
        p.transform.gain = 0.0;
        assert!(gen_phantom_pair(&p).is_err());
        let mut p = PhantomPairSpec::default();
        p.transform.noise_sigma = -0.1;
        assert!(gen_phantom_pair(&p).is_err());
    }

    #[test]
    fn phantom_regions_have_roughly_equal_area() {
        let spec = PhantomPairSpec { image_size: 96, n_images_per_domain: 3, ..Default::default() };
        let pair = gen_phantom_pair(&spec).unwrap();
        for img in &pair.training {
            let counts: Vec<usize> = (0..3u8).map(|k| img.classes.iter().filter(|&&c| c == k).count()).collect();
            let total: usize = counts.iter().sum();
            for c in counts {
                let frac = c as f64 / total as f64;
                assert!((frac - 1.0 / 3.0).abs() < 0.08, "{frac}");
            }
            let mask = img.image.mask().unwrap();
            assert!(mask.iter().zip(&img.classes).all(|(&m, &k)| m == (k != BACKGROUND)));
        }
    }

    #[test]
    fn phantom_domains_share_anatomy_but_not_noise() {
        let spec = PhantomPairSpec::default();
        let pair = gen_phantom_pair(&spec).unwrap();
        assert_eq!(pair.training.len(), spec.n_images_per_domain);
        for (t, u) in pair.training.iter().zip(&pair.unseen) {
            assert_eq!(t.classes, u.classes);
            assert_ne!(t.image.pixels(), u.image.pixels());
        }
        assert_ne!(pair.training[0].classes, pair.training[1].classes);
        assert_eq!(gen_phantom_pair(&spec).unwrap(), pair);
    }

    #[test]
    fn noise_free_transform_is_exact() {
        let spec = PhantomPairSpec {
            training_noise_sigma: 0.0,
            transform: AcquisitionTransform { gain: 1.3, gamma: 2.0, noise_sigma: 0.0 },
            ..Default::default()
        };
        let pair = gen_phantom_pair(&spec).unwrap();
        let (t, u) = (&pair.training[0], &pair.unseen[0]);
        for (i, &k) in t.classes.iter().enumerate() {
            if k == BACKGROUND {
                assert_eq!(t.image.pixels()[i], 0.0);
                continue;
            }
            let m = spec.tissue_means[k as usize];
            assert_eq!(t.image.pixels()[i], m);
            assert!((u.image.pixels()[i] - (1.3 * m).powf(2.0).min(1.0)).abs() < 1e-15);
        }
    }
}

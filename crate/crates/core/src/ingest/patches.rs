//! Square patches around foreground pixels, flattened into feature rows.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GrayImage, IngestError};
use crate::data::{Dataset, DomainTag};

pub const DEFAULT_PATCH_SIZE: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Every valid center.
    All,
    /// Up to `count` centers drawn without replacement.
    Random { count: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
    pub sampling: Sampling,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec { size: DEFAULT_PATCH_SIZE, sampling: Sampling::All }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.size == 0 || self.size.is_multiple_of(2) {
            return Err(IngestError::EvenPatchSize(self.size));
        }
        Ok(())
    }
}

/// Standardizes intensities to zero mean and unit variance over the
/// foreground (the whole image when there is no mask). A constant
/// foreground is only centered.
pub fn normalize_image(img: &GrayImage) -> Vec<f64> {
    let fg: Vec<f64> = img
        .pixels()
        .iter()
        .enumerate()
        .filter(|(i, _)| img.mask().is_none_or(|m| m[*i]))
        .map(|(_, &p)| p)
        .collect();
    if fg.is_empty() {
        return img.pixels().to_vec();
    }
    let n = fg.len() as f64;
    let mean = fg.iter().sum::<f64>() / n;
    let var = fg.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    img.pixels().iter().map(|p| (p - mean) / sd).collect()
}

pub fn extract_patches(img: &GrayImage, spec: &PatchSpec, tag: DomainTag) -> Result<Dataset, IngestError> {
    extract_patches_with_centers(img, spec, tag).map(|(d, _)| d)
}

/// Like [`extract_patches`], also returning each patch's `(row, col)` center.
pub fn extract_patches_with_centers(
    img: &GrayImage,
    spec: &PatchSpec,
    tag: DomainTag,
) -> Result<(Dataset, Vec<(usize, usize)>), IngestError> {
    spec.validate()?;
    let size = spec.size;
    let (w, h) = (img.width(), img.height());
    if w < size || h < size {
        return Err(IngestError::ImageTooSmall { width: w, height: h, size });
    }
    let half = size / 2;
    let mut centers: Vec<(usize, usize)> = (half..h - half)
        .flat_map(|r| (half..w - half).map(move |c| (r, c)))
        .filter(|&(r, c)| img.is_foreground(r, c))
        .collect();
    if centers.is_empty() {
        return Err(IngestError::NoForegroundPixels);
    }
    if let Sampling::Random { count, seed } = spec.sampling {
        if count < centers.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, centers.len(), count).into_vec();
            picked.sort_unstable();
            centers = picked.into_iter().map(|i| centers[i]).collect();
        }
    }
    if centers.is_empty() {
        return Err(IngestError::NoForegroundPixels);
    }

    let norm = normalize_image(img);
    let mut values = Vec::with_capacity(centers.len() * size * size);
    for &(r, c) in &centers {
        for rr in r - half..=r + half {
            let start = rr * w + c - half;
            values.extend_from_slice(&norm[start..start + size]);
        }
    }
    Ok((Dataset::from_flat(values, size * size, tag)?, centers))
}

/// Patches from several images, grouped by image name. With random
/// sampling, image `i` uses `seed + i`.
pub fn patches_from_images(
    images: &[(String, GrayImage)],
    spec: &PatchSpec,
    tag: DomainTag,
) -> Result<Dataset, IngestError> {
    let mut parts = Vec::with_capacity(images.len());
    for (i, (name, img)) in images.iter().enumerate() {
        let s = match spec.sampling {
            Sampling::Random { count, seed } => PatchSpec {
                size: spec.size,
                sampling: Sampling::Random { count, seed: seed.wrapping_add(i as u64) },
            },
            Sampling::All => *spec,
        };
        let d = extract_patches(img, &s, tag)?;
        let groups = vec![name.clone(); d.n_samples()];
        parts.push(d.with_groups(groups)?);
    }
    Ok(Dataset::concat(&parts)?)
}

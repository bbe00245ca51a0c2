//! Loading tabular and image data into [`Dataset`]s.

mod csv;
mod patches;
mod pgm;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::DatasetError;

pub use self::csv::{load_csv, write_csv};
pub use self::patches::{
    extract_patches, extract_patches_with_centers, normalize_image, patches_from_images, PatchSpec, Sampling,
    DEFAULT_PATCH_SIZE,
};
pub use self::pgm::{load_pgm, load_pgm_with_mask, mask_path_for, write_mask_pgm, write_pgm};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },
    #[error("{path}: cannot parse {value:?} as a number at line {line}, column {column}")]
    Parse { path: PathBuf, line: usize, column: usize, value: String },
    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    FieldCount { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: unsupported image format {magic:?} (expected P2 or P5)")]
    UnsupportedFormat { path: PathBuf, magic: String },
    #[error("{path}: truncated file, expected {expected} samples, found {found}")]
    TruncatedFile { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: malformed header: {message}")]
    MalformedHeader { path: PathBuf, message: String },
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    MaskMismatch { img_w: usize, img_h: usize, mask_w: usize, mask_h: usize },
    #[error("image {width}x{height} is smaller than the {size}x{size} patch")]
    ImageTooSmall { width: usize, height: usize, size: usize },
    #[error("no foreground pixel can serve as a patch center")]
    NoForegroundPixels,
    #[error("patch size must be odd and positive, got {0}")]
    EvenPatchSize(usize),
    #[error("{path}: no images found")]
    NoImages { path: PathBuf },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io { path: path.to_path_buf(), source }
    }
}

/// A grayscale image with an optional foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl GrayImage {
    /// Pixels are row-major and must be non-negative and finite.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, IngestError> {
        if pixels.len() != width * height {
            return Err(DatasetError::RaggedRows { row: height, expected: width * height, found: pixels.len() }.into());
        }
        if let Some(pos) = pixels.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(DatasetError::NonFiniteValue { row: pos / width.max(1), col: pos % width.max(1), value: pixels[pos] }.into());
        }
        Ok(GrayImage { width, height, pixels, mask: None })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, IngestError> {
        if mask.len() != self.pixels.len() {
            return Err(IngestError::MaskMismatch {
                img_w: self.width,
                img_h: self.height,
                mask_w: mask.len() / self.height.max(1),
                mask_h: self.height,
            });
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn is_foreground(&self, row: usize, col: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[row * self.width + col])
    }
}

/// Loads every `*.pgm` in `dir` (sorted by file name), attaching sibling
/// `<name>.mask.pgm` masks. Mask files themselves are skipped.
pub fn load_image_dir(dir: &Path) -> Result<Vec<(String, GrayImage)>, IngestError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IngestError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            p.is_file() && name.ends_with(".pgm") && !name.ends_with(".mask.pgm")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IngestError::NoImages { path: dir.to_path_buf() });
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
            Ok((name, load_pgm_with_mask(p)?))
        })
        .collect()
}

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use drc_core::ingest::{write_csv, write_mask_pgm, write_pgm};
use drc_core::synth::{gen_gaussian_pair, gen_phantom_pair, AcquisitionTransform, GaussianPairSpec, LabeledImage, PhantomPairSpec};

use crate::{ConfigArgs, GenerateArgs, GeneratorKind, PhantomArgs};

/// Phantom settings with unset flags taken from the library defaults.
pub(crate) fn phantom_spec(a: &PhantomArgs, seed: u64) -> Result<PhantomPairSpec> {
    let d = PhantomPairSpec::default();
    let tissue_means = match &a.tissue_means {
        Some(l) => <[f64; 3]>::try_from(l.0.as_slice())
            .map_err(|_| anyhow!("--tissue-means needs exactly three values, got {}", l.0.len()))?,
        None => d.tissue_means,
    };
    let spec = PhantomPairSpec {
        image_size: a.image_size.unwrap_or(d.image_size),
        n_images_per_domain: a.images.unwrap_or(d.n_images_per_domain),
        tissue_means,
        training_noise_sigma: a.training_noise.unwrap_or(d.training_noise_sigma),
        transform: AcquisitionTransform {
            gain: a.gain.unwrap_or(d.transform.gain),
            gamma: a.gamma.unwrap_or(d.transform.gamma),
            noise_sigma: a.noise.unwrap_or(d.transform.noise_sigma),
        },
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn write_images(dir: &Path, images: &[LabeledImage]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (i, li) in images.iter().enumerate() {
        let path = dir.join(format!("image{i:03}.pgm"));
        write_pgm(&path, &li.image)?;
        if let Some(mask) = li.image.mask() {
            write_mask_pgm(&drc_core::ingest::mask_path_for(&path), mask, li.image.width(), li.image.height())?;
        }
    }
    Ok(())
}

pub fn cmd_generate(args: GenerateArgs) -> Result<i32> {
    let args = args.resolve()?;
    let Some(kind) = args.kind else {
        bail!("choose what to generate: gaussian or phantom");
    };
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("generated"));
    let seed = args.seed.unwrap_or(0);
    match kind {
        GeneratorKind::Gaussian => {
            let spec = GaussianPairSpec {
                dim: args.dim.unwrap_or(2),
                shift: args.shift.unwrap_or(0.0),
                n_per_domain: args.n.unwrap_or(1000),
                seed,
            };
            let (t, u) = gen_gaussian_pair(&spec)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_csv(&out.join("training.csv"), &t)?;
            write_csv(&out.join("unseen.csv"), &u)?;
            println!("wrote {} and {}", out.join("training.csv").display(), out.join("unseen.csv").display());
        }
        GeneratorKind::Phantom => {
            let pair = gen_phantom_pair(&phantom_spec(&args.phantom, seed)?)?;
            write_images(&out.join("training"), &pair.training)?;
            write_images(&out.join("unseen"), &pair.unseen)?;
            println!(
                "wrote {} training and {} unseen images under {}",
                pair.training.len(),
                pair.unseen.len(),
                out.display()
            );
        }
    }
    Ok(0)
}

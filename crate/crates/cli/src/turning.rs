use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use drc_core::harness::{run_turning_point, Condition, ConditionSource, TurningPointOptions, TurningPointResult};
use drc_core::ingest::PatchSpec;
use serde::Serialize;

use crate::generate::phantom_spec;
use crate::output::{create_parent, sibling, timestamp, write_json};
use crate::{ConfigArgs, TurningPointArgs, TOOL_VERSION};

#[derive(Debug, Serialize)]
struct TurningReport<'a> {
    tool_version: &'static str,
    generated_at: String,
    seed: u64,
    config_echo: serde_json::Value,
    result: &'a TurningPointResult,
}

fn nonzero(v: Option<usize>, default: Option<usize>) -> Option<usize> {
    match v {
        Some(0) => None,
        Some(n) => Some(n),
        None => default,
    }
}

pub fn cmd_turning_point(args: TurningPointArgs) -> Result<i32> {
    let args = args.resolve()?;
    let d = TurningPointOptions::default();
    let seed = args.seed.unwrap_or(d.seed);
    let opts = TurningPointOptions {
        budgets: args.budgets.clone().map_or(d.budgets, |b| b.0),
        reps: args.reps.unwrap_or(d.reps),
        seed,
        patch_size: args.patch_size.unwrap_or(d.patch_size),
        training_patches_per_image: nonzero(args.training_patches_per_image, d.training_patches_per_image),
        test_images: args.test_images.unwrap_or(d.test_images),
        test_patches_per_image: nonzero(args.test_patches_per_image, d.test_patches_per_image),
        lambda: args.downstream_lambda.unwrap_or(d.lambda),
    };
    if opts.reps < 2 {
        bail!("--reps must be at least 2 (got {})", opts.reps);
    }
    let spec = phantom_spec(&args.phantom, seed)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("turning-point.json"));
    let condition = Condition {
        name: format!("gain={},gamma={},noise={}", spec.transform.gain, spec.transform.gamma, spec.transform.noise_sigma),
        label: spec.transform.gain,
        source: ConditionSource::Phantom { spec, patches: PatchSpec::default() },
    };
    let result = run_turning_point(&condition, &opts)?;

    let config_echo = serde_json::json!({
        "gain": spec.transform.gain,
        "gamma": spec.transform.gamma,
        "noise": spec.transform.noise_sigma,
        "training-noise": spec.training_noise_sigma,
        "tissue-means": spec.tissue_means,
        "image-size": spec.image_size,
        "images": spec.n_images_per_domain,
    });
    write_json(
        &out,
        &TurningReport { tool_version: TOOL_VERSION, generated_at: timestamp(), seed, config_echo, result: &result },
    )?;
    write_table(&sibling(&out, "csv"), &result)?;

    for r in &result.rows {
        println!(
            "budget {}: training+unseen {:.4}, unseen only {:.4}",
            r.budget, r.training_plus_unseen.mean, r.unseen_only.mean
        );
    }
    Ok(0)
}

fn write_table(path: &Path, result: &TurningPointResult) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["budget", "unseen_samples", "arm", "mean_error", "sem", "reps"])?;
    let sem = |s: Option<f64>| s.map(|v| v.to_string()).unwrap_or_default();
    for r in &result.rows {
        for (arm, m) in [("training_plus_unseen", &r.training_plus_unseen), ("unseen_only", &r.unseen_only)] {
            w.write_record([
                r.budget.to_string(),
                r.unseen_samples.to_string(),
                arm.to_string(),
                m.mean.to_string(),
                sem(m.sem),
                m.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use drc_core::harness::{run_similarity_sweep, write_histogram_csv, write_sweep_csv, Condition, ConditionSource, SweepOptions, SweepResult};
use drc_core::synth::GaussianPairSpec;
use drc_core::{BetaParams, DomainTag};
use serde::Serialize;

use crate::compare::{load_input, resolve_modality, ResolvedAnalysis, ResolvedPatches};
use crate::generate::phantom_spec;
use crate::output::{create_parent, sibling, timestamp, write_json};
use crate::{ConfigArgs, GeneratorKind, Modality, SweepArgs, TOOL_VERSION};

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    tool_version: &'static str,
    generated_at: String,
    seed: u64,
    config_echo: &'a serde_json::Value,
    result: &'a SweepResult,
}

fn conditions(args: &SweepArgs, analysis: &ResolvedAnalysis, echo: &mut serde_json::Map<String, serde_json::Value>) -> Result<Vec<Condition>> {
    if let Some(unseen) = &args.unseen {
        let training = args.training.clone().ok_or_else(|| anyhow!("--unseen needs --training"))?;
        let mut paths = vec![("training", training.as_path())];
        paths.extend(unseen.iter().map(|p| ("unseen", p.as_path())));
        let modality = resolve_modality(&paths, args.modality)?;
        let patches = ResolvedPatches::from_args(&args.patches);
        let t = load_input(&training, modality, DomainTag::Training, &patches, analysis.seed)?;
        echo.insert("training".into(), serde_json::to_value(&training)?);
        echo.insert("unseen".into(), serde_json::to_value(unseen)?);
        echo.insert("modality".into(), serde_json::to_value(modality)?);
        if modality == Modality::Images {
            echo.insert("patches".into(), serde_json::to_value(&patches)?);
        }
        return unseen
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let u = load_input(p, modality, DomainTag::Unseen, &patches, analysis.seed)?;
                Ok(Condition {
                    name: p.display().to_string(),
                    label: i as f64,
                    source: ConditionSource::Data { training: t.clone(), unseen: u },
                })
            })
            .collect();
    }
    if args.training.is_some() {
        bail!("--training needs at least one --unseen");
    }
    match args.generator.unwrap_or(GeneratorKind::Gaussian) {
        GeneratorKind::Gaussian => {
            let shifts = args.shifts.clone().map_or_else(|| vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0], |l| l.0);
            let dim = args.dim.unwrap_or(2);
            let n = args.n.unwrap_or(1000);
            echo.insert("generator".into(), "gaussian".into());
            echo.insert("shifts".into(), serde_json::to_value(&shifts)?);
            echo.insert("dim".into(), dim.into());
            echo.insert("n".into(), n.into());
            Ok(shifts
                .iter()
                .map(|&d| Condition::gaussian(format!("d={d}"), GaussianPairSpec { dim, shift: d, n_per_domain: n, seed: 0 }))
                .collect())
        }
        GeneratorKind::Phantom => {
            let gains = args.gains.clone().map_or_else(|| vec![1.0, 1.05, 1.3], |l| l.0);
            let base = phantom_spec(&args.phantom, 0)?;
            let patches = ResolvedPatches::from_args(&args.patches);
            echo.insert("generator".into(), "phantom".into());
            echo.insert("gains".into(), serde_json::to_value(&gains)?);
            echo.insert(
                "phantom".into(),
                serde_json::json!({
                    "gamma": base.transform.gamma,
                    "noise": base.transform.noise_sigma,
                    "training-noise": base.training_noise_sigma,
                    "tissue-means": base.tissue_means,
                    "image-size": base.image_size,
                    "images": base.n_images_per_domain,
                }),
            );
            echo.insert("patches".into(), serde_json::to_value(&patches)?);
            gains
                .iter()
                .map(|&g| {
                    let mut spec = base;
                    spec.transform.gain = g;
                    spec.validate()?;
                    Ok(Condition {
                        name: format!("gain={g}"),
                        label: g,
                        source: ConditionSource::Phantom { spec, patches: patches.spec(0) },
                    })
                })
                .collect()
        }
    }
}

pub fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let args = args.resolve()?;
    let analysis = ResolvedAnalysis::from_args(&args.analysis);
    let reps = args.reps.unwrap_or(20);
    if reps < 2 {
        bail!("--reps must be at least 2 (got {reps})");
    }
    let bm1_list: Vec<BetaParams> = args
        .bm1_list
        .clone()
        .map_or_else(|| vec![25.0, 50.0, 100.0, 200.0, 300.0, 400.0], |l| l.0)
        .into_iter()
        .map(BetaParams::symmetric)
        .collect::<Result<_, _>>()?;
    let config = analysis.drc_config(bm1_list[0])?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("sweep.json"));

    let mut echo = serde_json::Map::new();
    let conditions = conditions(&args, &analysis, &mut echo)?;
    echo.insert("reps".into(), reps.into());
    echo.insert("bm1-list".into(), serde_json::to_value(bm1_list.iter().map(|b| b.alpha()).collect::<Vec<_>>())?);
    echo.insert("dump-probabilities".into(), args.dump_probabilities.into());
    if let serde_json::Value::Object(a) = serde_json::to_value(&analysis)? {
        echo.extend(a);
    }
    let echo = serde_json::Value::Object(echo);

    let opts = SweepOptions {
        reps,
        bm1_list,
        config,
        cv: analysis.cv(),
        seed: analysis.seed,
        keep_probabilities: args.dump_probabilities,
    };
    let result = run_similarity_sweep(&conditions, &opts)?;

    write_json(
        &out,
        &SweepReport { tool_version: TOOL_VERSION, generated_at: timestamp(), seed: analysis.seed, config_echo: &echo, result: &result },
    )?;
    write_sweep_csv(&sibling(&out, "rows.csv"), &result)?;
    write_histogram_csv(&sibling(&out, "hist.csv"), &result)?;
    if args.dump_probabilities {
        write_probabilities(&sibling(&out, "probabilities.csv"), &result)?;
    }

    for c in &result.conditions {
        let p = &c.priors[0];
        let drc = p.drc.as_ref().map_or_else(|| "undefined".to_string(), |m| format!("{:.4}", m.mean));
        println!(
            "{}: cv_error {:.4}, proxy-A {:.4}, DRC(bm1 {}) {drc}, {} of {} reps computed",
            c.name, c.cv_error.mean, c.proxy_a.mean, p.bm1.alpha(), p.n_computed, reps
        );
    }
    Ok(0)
}

fn write_probabilities(path: &std::path::Path, result: &SweepResult) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["condition", "rep", "probability"])?;
    for c in &result.conditions {
        for r in &c.reps {
            for p in r.probabilities.iter().flatten() {
                w.write_record([c.name.as_str(), &r.rep.to_string(), &p.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

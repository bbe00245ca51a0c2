//! Command implementations behind the `drc` binary.
//!
//! Every flag can also be given in a JSON file passed with `--config`, using
//! the flag name as the key (`{"lambda-grid": [0.01, 1], "bm1": "50,50"}`).
//! Flags override the file.

pub mod args;
mod compare;
mod generate;
mod output;
mod sweep;
mod turning;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use args::{BetaArg, FloatList};

pub use compare::cmd_compare;
pub use generate::cmd_generate;
pub use sweep::cmd_sweep;
pub use turning::cmd_turning_point;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code for any error.
pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "drc", version, about = "Check how representative a training dataset is of unseen data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare a training dataset with an unseen dataset.
    ///
    /// Exit code: 0 representative, 10 caution, 20 not representative,
    /// 30 separable, 1 error.
    Compare(CompareArgs),
    /// Repeat the comparison over a spectrum of conditions and benchmark priors.
    Sweep(SweepArgs),
    /// Downstream error of training+unseen vs unseen-only training.
    TurningPoint(TurningPointArgs),
    /// Write synthetic dataset pairs.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Csv,
    Images,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AnalysisArgs {
    /// Cross-validation folds [default: 5]
    #[arg(long)]
    pub folds: Option<usize>,
    /// Comma-separated regularization strengths [default: 9 values, 1e-4..1e4]
    #[arg(long)]
    pub lambda_grid: Option<FloatList>,
    /// Benchmark prior 2 as "alpha,beta" [default: 1,1]
    #[arg(long)]
    pub bm2: Option<BetaArg>,
    /// Half-width of the caution band around 1 [default: 0.1]
    #[arg(long)]
    pub caution_band: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PatchArgs {
    /// Odd patch side length for image inputs
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Random patches per image; 0 keeps every patch
    #[arg(long)]
    pub patches_per_image: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PhantomArgs {
    /// Multiplicative gain of the unseen domain [default: 1]
    #[arg(long)]
    pub gain: Option<f64>,
    /// Contrast exponent of the unseen domain [default: 1]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Noise sigma of the unseen domain [default: 0.05]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Noise sigma of the training domain [default: 0.05]
    #[arg(long)]
    pub training_noise: Option<f64>,
    /// Three tissue intensities [default: 0.2,0.5,0.8]
    #[arg(long)]
    pub tissue_means: Option<FloatList>,
    /// Image side length in pixels [default: 48]
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Images per domain [default: 10]
    #[arg(long)]
    pub images: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct CompareArgs {
    /// Training data: a CSV file or a directory of PGM images
    #[arg(long)]
    pub training: Option<PathBuf>,
    /// Unseen data: a CSV file or a directory of PGM images
    #[arg(long)]
    pub unseen: Option<PathBuf>,
    /// Input type; detected from the paths when omitted
    #[arg(long, value_enum)]
    pub modality: Option<Modality>,
    /// Benchmark prior 1 as "alpha,beta" [default: 25,25]
    #[arg(long)]
    pub bm1: Option<BetaArg>,
    #[command(flatten)]
    #[serde(flatten)]
    pub patches: PatchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisArgs,
    /// Report path [default: drc-report.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with default values for any of these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Gaussian,
    Phantom,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct SweepArgs {
    /// Synthetic condition family [default: gaussian]
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorKind>,
    /// Gaussian mean shifts, one condition each [default: 0,0.5,1,1.5,2,3]
    #[arg(long)]
    pub shifts: Option<FloatList>,
    /// Gaussian dimension [default: 2]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Samples per domain for Gaussian conditions [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Phantom gains, one condition each [default: 1,1.05,1.3]
    #[arg(long)]
    pub gains: Option<FloatList>,
    #[command(flatten)]
    #[serde(flatten)]
    pub phantom: PhantomArgs,
    /// Training data shared by file conditions
    #[arg(long)]
    pub training: Option<PathBuf>,
    /// Unseen datasets, one condition each (repeat the flag)
    #[arg(long)]
    pub unseen: Option<Vec<PathBuf>>,
    #[arg(long, value_enum)]
    pub modality: Option<Modality>,
    /// Benchmark prior 1 concentrations a, for Beta(a,a) [default: 25,50,100,200,300,400]
    #[arg(long)]
    pub bm1_list: Option<FloatList>,
    /// Repetitions per condition, at least 2 [default: 20]
    #[arg(long)]
    pub reps: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub patches: PatchArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub analysis: AnalysisArgs,
    /// Also write every pooled probability to <out>.probabilities.csv
    #[arg(long)]
    pub dump_probabilities: bool,
    /// Report path; rows and histograms go next to it [default: sweep.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct TurningPointArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub phantom: PhantomArgs,
    /// Unseen patches per training image, or "all" [default: 10,100,300,all]
    #[arg(long)]
    pub budgets: Option<args::BudgetList>,
    /// Repetitions, at least 2 [default: 10]
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Odd patch side length [default: 9]
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Training-domain patches per image; 0 keeps every patch [default: 0]
    #[arg(long)]
    pub training_patches_per_image: Option<usize>,
    /// Unseen images held out for evaluation [default: 2]
    #[arg(long)]
    pub test_images: Option<usize>,
    /// Evaluation patches per held-out image; 0 keeps every patch [default: 500]
    #[arg(long)]
    pub test_patches_per_image: Option<usize>,
    /// L2 strength of the downstream classifier [default: 0.01]
    #[arg(long)]
    pub downstream_lambda: Option<f64>,
    /// Report path; the error table goes next to it as CSV [default: turning-point.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct GenerateArgs {
    /// What to generate
    #[arg(value_enum)]
    pub kind: Option<GeneratorKind>,
    /// Gaussian mean shift [default: 0]
    #[arg(long)]
    pub shift: Option<f64>,
    /// Gaussian samples per domain [default: 1000]
    #[arg(long)]
    pub n: Option<usize>,
    /// Gaussian dimension [default: 2]
    #[arg(long)]
    pub dim: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub phantom: PhantomArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: generated]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Fills every unset option of `$dst` from `$src`.
macro_rules! fill {
    ($dst:expr, $src:expr; $($field:ident),* $(,)?) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl AnalysisArgs {
    fn fill_from(&mut self, f: AnalysisArgs) {
        fill!(self, f; folds, lambda_grid, bm2, caution_band, seed);
    }
}

impl PatchArgs {
    fn fill_from(&mut self, f: PatchArgs) {
        fill!(self, f; patch_size, patches_per_image);
    }
}

impl PhantomArgs {
    fn fill_from(&mut self, f: PhantomArgs) {
        fill!(self, f; gain, gamma, noise, training_noise, tissue_means, image_size, images);
    }
}

/// Arguments that can be completed from a config file.
pub trait ConfigArgs: Sized + Default + Serialize + DeserializeOwned {
    fn config_path(&self) -> Option<&Path>;
    fn fill_from(&mut self, file: Self);

    /// Flags first, then the config file.
    fn resolve(mut self) -> Result<Self> {
        if let Some(path) = self.config_path() {
            let file: Self = load_config(path)?;
            self.fill_from(file);
        }
        Ok(self)
    }
}

impl ConfigArgs for CompareArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn fill_from(&mut self, f: Self) {
        fill!(self, f; training, unseen, modality, bm1, out);
        self.patches.fill_from(f.patches);
        self.analysis.fill_from(f.analysis);
    }
}

impl ConfigArgs for SweepArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn fill_from(&mut self, f: Self) {
        fill!(self, f; generator, shifts, dim, n, gains, training, unseen, modality, bm1_list, reps, out);
        self.dump_probabilities |= f.dump_probabilities;
        self.phantom.fill_from(f.phantom);
        self.patches.fill_from(f.patches);
        self.analysis.fill_from(f.analysis);
    }
}

impl ConfigArgs for TurningPointArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn fill_from(&mut self, f: Self) {
        fill!(self, f; budgets, reps, seed, patch_size, training_patches_per_image, test_images,
            test_patches_per_image, downstream_lambda, out);
        self.phantom.fill_from(f.phantom);
    }
}

impl ConfigArgs for GenerateArgs {
    fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }

    fn fill_from(&mut self, f: Self) {
        fill!(self, f; kind, shift, n, dim, seed, out);
        self.phantom.fill_from(f.phantom);
    }
}

/// Reads a JSON object whose keys are flag names. Unknown keys are errors.
pub fn load_config<T: Default + Serialize + DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let Some(obj) = value.as_object() else {
        bail!("config {} must contain a JSON object", path.display());
    };
    let known = serde_json::to_value(T::default())?;
    if let Some(bad) = obj.keys().find(|k| known.get(k.as_str()).is_none()) {
        bail!("config {}: unknown key {bad:?}", path.display());
    }
    serde_json::from_value(value).with_context(|| format!("config {}", path.display()))
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::TurningPoint(a) => cmd_turning_point(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"folds": 3, "seed": 9, "bm1": "50,50", "lambda-grid": [1, 2]}"#).unwrap();
        let cli = Cli::parse_from(["drc", "compare", "--seed", "4", "--config", cfg.to_str().unwrap()]);
        let Command::Compare(a) = cli.command else { panic!() };
        let a = a.resolve().unwrap();
        assert_eq!(a.analysis.seed, Some(4));
        assert_eq!(a.analysis.folds, Some(3));
        assert_eq!(a.bm1.unwrap().0.alpha(), 50.0);
        assert_eq!(a.analysis.lambda_grid.unwrap().0, vec![1.0, 2.0]);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"fodls": 3}"#).unwrap();
        let err = load_config::<CompareArgs>(&cfg).unwrap_err();
        assert!(err.to_string().contains("fodls"));
    }
}

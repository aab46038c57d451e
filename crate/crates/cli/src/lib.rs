//! The `plantnet` command-line pipeline: preprocess a class-per-directory
//! image tree, train and evaluate the CNN, grid-search hyperparameters and
//! render training charts.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical divergence.

mod common;
mod error;
pub mod evaluate;
pub mod gridsearch;
pub mod plot;
pub mod preprocess;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use plantnet_core::imgproc::{ChannelRange, ColorSpace, MorphOp, ThresholdPreset};
use plantnet_core::network::WidthScale;
use plantnet_core::optim::Algorithm;
use plantnet_core::Precision;

pub use error::{CliError, CliResult};

fn core_parse<T: FromStr<Err = plantnet_core::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: plantnet_core::Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "plantnet", version, about = "Plant-disease CNN toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resize, smooth and balance a dataset tree; optionally emit segmentation masks.
    Preprocess(PreprocessArgs),
    /// Train the CNN and write model.bin, metrics.csv, split.csv and run.txt.
    Train(TrainArgs),
    /// Score a trained model: confusion matrix, ROC curves and AUC.
    Evaluate(EvaluateArgs),
    /// k-fold cross-validated grid search over hyperparameters.
    Gridsearch(GridArgs),
    /// Render accuracy, loss, ROC and AUC charts as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input_dir: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Output side length in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Images per class after balancing.
    #[arg(long, default_value_t = 2000)]
    pub target_count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub blur_sigma: f64,
    /// Odd Gaussian kernel width.
    #[arg(long, default_value_t = 5)]
    pub blur_kernel: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated class labels (default: the 15 PlantVillage classes).
    #[arg(long)]
    pub labels: Option<String>,
    /// Also write binary masks of every output image.
    #[arg(long)]
    pub emit_masks: bool,
    /// Mask tree root (default: the output directory name plus `_masks`).
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    #[arg(long, default_value = "hsv", value_parser = core_parse::<ColorSpace>)]
    pub space: ColorSpace,
    /// Per-channel `lo:hi` ranges, comma-separated; overrides --preset.
    #[arg(long, value_parser = parse_ranges)]
    pub ranges: Option<Vec<ChannelRange>>,
    /// Named HSV ranges: leaf-green or lesion-brown.
    #[arg(long, default_value = "leaf-green", value_parser = core_parse::<ThresholdPreset>)]
    pub preset: ThresholdPreset,
    /// Mask cleanup: erode, dilate, open, close or none.
    #[arg(long, default_value = "open", value_parser = parse_morph)]
    pub morph: MaskCleanup,
}

/// `--morph` value; `none` skips the cleanup pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskCleanup(pub Option<MorphOp>);

fn parse_ranges(s: &str) -> Result<Vec<ChannelRange>, String> {
    s.split(',').map(core_parse::<ChannelRange>).collect()
}

fn parse_morph(s: &str) -> Result<MaskCleanup, String> {
    if s == "none" {
        Ok(MaskCleanup(None))
    } else {
        core_parse::<MorphOp>(s).map(|op| MaskCleanup(Some(op)))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Input side length the images are resized to.
    #[arg(long, default_value_t = 256)]
    pub input_size: usize,
    /// Channel multiplier, `N` or `N/D`.
    #[arg(long, default_value = "1", value_parser = core_parse::<WidthScale>)]
    pub width_scale: WidthScale,
    #[arg(long, default_value_t = 0.25)]
    pub dropout_conv: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout_dense: f64,
    /// Arithmetic precision: f32 or f64.
    #[arg(long, default_value = "f32", value_parser = core_parse::<Precision>)]
    pub precision: Precision,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizerArgs {
    /// rmsprop, adam or amsgrad.
    #[arg(long, default_value = "adam", value_parser = core_parse::<Algorithm>)]
    pub optimizer: Algorithm,
    /// Learning rate α (default 0.001).
    #[arg(long)]
    pub lr: Option<f64>,
    /// RMSprop decay β (default 0.95).
    #[arg(long)]
    pub beta: Option<f64>,
    /// First-moment decay β₁ (default 0.9).
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Second-moment decay β₂ (default 0.999).
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Regularization ε inside the square root (default 1e-8).
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub optim: OptimizerArgs,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Stratified validation fraction.
    #[arg(long, default_value_t = 0.2)]
    pub val_split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated class labels (default: the 15 PlantVillage classes).
    #[arg(long)]
    pub labels: Option<String>,
    /// Decode images from disk for every batch instead of caching them in memory.
    #[arg(long)]
    pub stream: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SplitChoice {
    Val,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitChoice::Val)]
    pub split: SplitChoice,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub stream: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub data_dir: PathBuf,
    /// TOML file with one value list per hyperparameter axis.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub optim: OptimizerArgs,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub metrics: PathBuf,
    /// Directory holding roc_<k>.csv files and auc.csv.
    #[arg(long)]
    pub roc_dir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string())),
    };
    match cli.command {
        Command::Preprocess(a) => preprocess::run(&a),
        Command::Train(a) => train::run(&a).map(|_| ()),
        Command::Evaluate(a) => evaluate::run(&a).map(|_| ()),
        Command::Gridsearch(a) => gridsearch::run(&a).map(|_| ()),
        Command::Plot(a) => plot::run(&a),
    }
}

/// [`run`], reporting failures on stderr and returning the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                // clap's rendered messages carry their own prefix and newline
                CliError::Usage(msg) if msg.ends_with('\n') => eprint!("{msg}"),
                other => eprintln!("error: {other}"),
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_subcommand_parses_its_defaults() {
        let words: [&[&str]; 5] = [
            &["preprocess", "--input-dir", "i", "--output-dir", "o", "--morph", "none"],
            &["train", "--data-dir", "d", "--out-dir", "o", "--width-scale", "1/8"],
            &["evaluate", "--model", "m", "--data-dir", "d", "--out-dir", "o"],
            &["gridsearch", "--data-dir", "d", "--grid", "g", "--out-dir", "o"],
            &["plot", "--metrics", "m", "--roc-dir", "r", "--out", "o"],
        ];
        for w in words {
            let parsed = Cli::try_parse_from(std::iter::once("plantnet").chain(w.iter().copied()));
            assert!(parsed.is_ok(), "{w:?}: {:?}", parsed.err());
        }
    }
}

//! Command-line harness: dataset preparation, synthetic data, training,
//! evaluation, cross-validation, gradient checking and prediction.

pub mod commands;
pub mod config;
mod error;
mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Preset, RunConfig};
pub use error::{
    exit_code, CliError, CliResult, EXIT_DATA, EXIT_GRADCHECK, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE,
};

#[derive(Debug, Parser)]
#[command(
    name = "chrononet",
    version,
    about = "Multi-scale conv + dense GRU time-series classifiers",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn EDF sessions listed in a manifest into a normalized dataset.
    Prepare(PrepareArgs),
    /// Generate the multi-timescale synthetic dataset.
    Synth(SynthArgs),
    /// Train a model; writes metrics CSV and checkpoint per repeat.
    Train(TrainArgs),
    /// Accuracy and confusion counts of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Patient-grouped k-fold cross-validation.
    Cv(CvArgs),
    /// Finite-difference check of every layer's gradients in 64-bit.
    Gradcheck(GradcheckArgs),
    /// Per-sample predicted class and probabilities.
    Predict(PredictArgs),
}

/// Options shared by commands that read a run configuration.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// key=value configuration file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub arch: Option<String>,
    /// Comma-separated kernel lengths per block
    #[arg(long)]
    pub kernels: Option<String>,
    /// Filters per kernel
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Number of convolutional blocks
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Comma-separated GRU widths
    #[arg(long)]
    pub gru_widths: Option<String>,
    #[arg(long)]
    pub classes: Option<usize>,
    /// `last` or `all` (concatenated final states of every layer)
    #[arg(long)]
    pub readout: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Worker threads for repeats and folds; results do not depend on it
    #[arg(long)]
    pub jobs: Option<usize>,
    /// train|f32|f32check or check|f64|f64check
    #[arg(long)]
    pub precision: Option<String>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Write 0 instead of wall-clock seconds in metrics
    #[arg(long)]
    pub no_timing: bool,
}

impl RunArgs {
    /// Configuration file (if any) with flags applied on top.
    pub fn resolve(&self) -> chrononet::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let s = |v: &Option<String>| v.clone();
        let d = |v: Option<usize>| v.map(|x| x.to_string());
        let overrides: [(&str, Option<String>); 18] = [
            ("preset", s(&self.preset)),
            ("architecture", s(&self.arch)),
            ("kernels", s(&self.kernels)),
            ("filters", d(self.filters)),
            ("stride", d(self.stride)),
            ("blocks", d(self.blocks)),
            ("gru_widths", s(&self.gru_widths)),
            ("num_classes", d(self.classes)),
            ("readout", s(&self.readout)),
            ("learning_rate", self.lr.map(|v| v.to_string())),
            ("batch_size", d(self.batch)),
            ("epochs", d(self.epochs)),
            ("seed", self.seed.map(|v| v.to_string())),
            ("repeats", d(self.repeats)),
            ("jobs", d(self.jobs)),
            ("precision", s(&self.precision)),
            ("eval_every", d(self.eval_every)),
            ("clip_norm", self.clip_norm.map(|v| v.to_string())),
        ];
        for (k, v) in overrides {
            if let Some(v) = v {
                cfg.apply(k, &v)?;
            }
        }
        if self.no_timing {
            cfg.timing = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub edf_dir: Option<PathBuf>,
    /// CSV with header path,label,patient_id,split
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// anode,cathode,name lines; the 22-channel TCP montage by default
    #[arg(long)]
    pub montage: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 512)]
    pub length: usize,
    #[arg(long, default_value_t = 2)]
    pub channels: usize,
    /// Training samples per class
    #[arg(long, default_value_t = 500)]
    pub per_class: usize,
    /// Test samples per class
    #[arg(long, default_value_t = 200)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 64.0)]
    pub envelope_period: f64,
    /// Probability that the envelope alone names the class (0.5: no hint)
    #[arg(long, default_value_t = 0.68)]
    pub envelope_hint: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset container; samples tagged `test` are evaluated, not trained on
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Separate evaluation container
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train, test or all
    #[arg(long, default_value = "all")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Destination of the fold,accuracy CSV; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupt the backward rule of one op (negative control)
    #[arg(long)]
    pub fault: Option<String>,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Destination CSV; stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, writing its
/// report to `out`. Returns the process exit status.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code
        }
    }
}

pub fn dispatch(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Prepare(a) => commands::prepare::run(&a, out),
        Command::Synth(a) => commands::synth::run(&a, out),
        Command::Train(a) => commands::train::run(&a, out),
        Command::Eval(a) => commands::eval::run(&a, out),
        Command::Cv(a) => commands::cv::run(&a, out),
        Command::Gradcheck(a) => commands::gradcheck::run(&a, out),
        Command::Predict(a) => commands::predict::run(&a, out),
    }
}

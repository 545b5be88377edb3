//! Run configuration: one `key=value` file covering the model, training,
//! windowing and paths, overridable from the command line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrononet::arch::{key_values, Architecture, ConvBlockSpec, ModelConfig, Readout};
use chrononet::data::WindowSpec;
use chrononet::train::TrainConfig;
use chrononet::{Error, Result};

/// Starting point for model fields not set explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Full-size network (three blocks of 32 filters per kernel, four GRU
    /// layers of width 32).
    Default,
    /// Two blocks of 8 filters per kernel, GRU width 16; for desk-scale runs.
    Small,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(Preset::Default),
            "small" => Ok(Preset::Small),
            other => Err(Error::Config {
                field: "preset".into(),
                message: format!("unknown preset `{other}` (default, small)"),
            }),
        }
    }
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Default => "default",
            Preset::Small => "small",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub architecture: Architecture,
    pub kernels: Option<Vec<usize>>,
    pub filters: Option<usize>,
    pub stride: Option<usize>,
    pub blocks: Option<usize>,
    pub gru_widths: Option<Vec<usize>>,
    pub num_classes: Option<usize>,
    pub input_channels: Option<usize>,
    pub readout: Readout,
    pub train: TrainConfig,
    pub window: WindowSpec,
    pub repeats: usize,
    pub jobs: usize,
    pub folds: usize,
    /// Write wall-clock seconds into metrics; off makes runs byte-identical.
    pub timing: bool,
    pub data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub edf_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub montage: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Default,
            architecture: Architecture::Chrononet,
            kernels: None,
            filters: None,
            stride: None,
            blocks: None,
            gru_widths: None,
            num_classes: None,
            input_channels: None,
            readout: Readout::Last,
            train: TrainConfig::default(),
            window: WindowSpec::default(),
            repeats: 1,
            jobs: 1,
            folds: 5,
            timing: true,
            data: None,
            test_data: None,
            out_dir: None,
            checkpoint: None,
            edf_dir: None,
            manifest: None,
            montage: None,
        }
    }
}

/// Every key accepted in a configuration file.
pub const KEYS: &[&str] = &[
    "preset",
    "architecture",
    "kernels",
    "filters",
    "stride",
    "blocks",
    "gru_widths",
    "num_classes",
    "input_channels",
    "readout",
    "precision",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "shuffle",
    "clip_norm",
    "eval_every",
    "check_finite",
    "window_seconds",
    "sample_rate",
    "max_train_windows",
    "test_windows",
    "repeats",
    "jobs",
    "folds",
    "timing",
    "data",
    "test_data",
    "out_dir",
    "checkpoint",
    "edf_dir",
    "manifest",
    "montage",
];

fn num<N: FromStr>(key: &str, v: &str) -> Result<N> {
    v.trim().parse().map_err(|_| Error::Config {
        field: key.into(),
        message: format!("`{v}` is not a valid number"),
    })
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| num(key, p))
        .collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config {
            field: key.into(),
            message: format!("`{v}` is not a boolean"),
        }),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in key_values(text)? {
            cfg.apply(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets one key from its text form; unknown keys are rejected.
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let path = || Some(PathBuf::from(v.trim()));
        match key {
            "preset" => self.preset = v.parse()?,
            "architecture" | "arch" => self.architecture = v.parse()?,
            "kernels" => self.kernels = Some(list(key, v)?),
            "filters" => self.filters = Some(num(key, v)?),
            "stride" => self.stride = Some(num(key, v)?),
            "blocks" => self.blocks = Some(num(key, v)?),
            "gru_widths" => self.gru_widths = Some(list(key, v)?),
            "num_classes" | "classes" => self.num_classes = Some(num(key, v)?),
            "input_channels" => self.input_channels = Some(num(key, v)?),
            "readout" => self.readout = v.parse()?,
            "precision" => self.train.precision = v.parse()?,
            "learning_rate" | "lr" => self.train.learning_rate = num(key, v)?,
            "batch_size" | "batch" => self.train.batch_size = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "seed" => self.train.seed = num(key, v)?,
            "shuffle" => self.train.shuffle = flag(key, v)?,
            "clip_norm" => {
                self.train.clip_norm = match v.trim() {
                    "" | "none" => None,
                    s => Some(num(key, s)?),
                }
            }
            "eval_every" => self.train.eval_every = num(key, v)?,
            "check_finite" => self.train.check_finite = flag(key, v)?,
            "window_seconds" => self.window.seconds = num(key, v)?,
            "sample_rate" => self.window.rate = num(key, v)?,
            "max_train_windows" => self.window.max_train_windows = num(key, v)?,
            "test_windows" => self.window.test_windows = num(key, v)?,
            "repeats" => self.repeats = num(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "folds" => self.folds = num(key, v)?,
            "timing" => self.timing = flag(key, v)?,
            "data" => self.data = path(),
            "test_data" => self.test_data = path(),
            "out_dir" => self.out_dir = path(),
            "checkpoint" => self.checkpoint = path(),
            "edf_dir" => self.edf_dir = path(),
            "manifest" => self.manifest = path(),
            "montage" => self.montage = path(),
            other => {
                return Err(Error::Config {
                    field: other.into(),
                    message: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.window.validate()?;
        for (field, value) in [("repeats", self.repeats), ("jobs", self.jobs)] {
            if value == 0 {
                return Err(Error::Config {
                    field: field.into(),
                    message: "must be at least 1".into(),
                });
            }
        }
        if self.folds < 2 {
            return Err(Error::Config {
                field: "folds".into(),
                message: "need at least two folds".into(),
            });
        }
        // Resolve against a placeholder shape so structural mistakes surface
        // before any data is read.
        self.model_config(self.input_channels.unwrap_or(1), 2)?;
        Ok(())
    }

    /// Model configuration for data with `channels` input channels and
    /// `classes` observed classes, unless fixed explicitly.
    pub fn model_config(&self, channels: usize, classes: usize) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::preset(self.architecture);
        if self.preset == Preset::Small {
            cfg.conv_blocks.truncate(2);
            cfg.conv_blocks.iter_mut().for_each(|b| b.filters_per_kernel = 8);
            cfg.gru_widths = vec![16; 4];
        }
        let base = cfg.conv_blocks[0].clone();
        if self.kernels.is_some() || self.filters.is_some() || self.stride.is_some() || self.blocks.is_some() {
            let block = ConvBlockSpec::new(
                self.kernels.clone().unwrap_or(base.kernel_lengths),
                self.filters.unwrap_or(base.filters_per_kernel),
                self.stride.unwrap_or(base.stride),
            );
            cfg.conv_blocks = vec![block; self.blocks.unwrap_or(cfg.conv_blocks.len())];
        }
        if let Some(w) = &self.gru_widths {
            cfg.gru_widths = w.clone();
        }
        cfg.input_channels = self.input_channels.unwrap_or(channels);
        cfg.num_classes = self.num_classes.unwrap_or(classes.max(2));
        cfg.precision = self.train.precision;
        cfg.readout = self.readout;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key=value` text that parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let join = |xs: &[usize]| xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut lines = vec![
            format!("preset={}", self.preset.as_str()),
            format!("architecture={}", self.architecture),
        ];
        let opt = |k: &str, v: Option<String>| v.map(|v| format!("{k}={v}"));
        lines.extend(
            [
                opt("kernels", self.kernels.as_deref().map(join)),
                opt("filters", self.filters.map(|v| v.to_string())),
                opt("stride", self.stride.map(|v| v.to_string())),
                opt("blocks", self.blocks.map(|v| v.to_string())),
                opt("gru_widths", self.gru_widths.as_deref().map(join)),
                opt("num_classes", self.num_classes.map(|v| v.to_string())),
                opt("input_channels", self.input_channels.map(|v| v.to_string())),
            ]
            .into_iter()
            .flatten(),
        );
        let t = &self.train;
        lines.extend([
            format!("readout={}", self.readout.as_str()),
            format!("precision={}", t.precision.as_str()),
            format!("learning_rate={}", t.learning_rate),
            format!("batch_size={}", t.batch_size),
            format!("epochs={}", t.epochs),
            format!("seed={}", t.seed),
            format!("shuffle={}", t.shuffle),
            format!("clip_norm={}", t.clip_norm.map_or("none".into(), |c| c.to_string())),
            format!("eval_every={}", t.eval_every),
            format!("check_finite={}", t.check_finite),
            format!("window_seconds={}", self.window.seconds),
            format!("sample_rate={}", self.window.rate),
            format!("max_train_windows={}", self.window.max_train_windows),
            format!("test_windows={}", self.window.test_windows),
            format!("repeats={}", self.repeats),
            format!("jobs={}", self.jobs),
            format!("folds={}", self.folds),
            format!("timing={}", self.timing),
        ]);
        for (k, p) in [
            ("data", &self.data),
            ("test_data", &self.test_data),
            ("out_dir", &self.out_dir),
            ("checkpoint", &self.checkpoint),
            ("edf_dir", &self.edf_dir),
            ("manifest", &self.manifest),
            ("montage", &self.montage),
        ] {
            if let Some(p) = p {
                lines.push(format!("{k}={}", p.display()));
            }
        }
        lines.join("\n") + "\n"
    }
}

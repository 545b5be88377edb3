use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The four network families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Single-kernel convolutions, plain GRU stack.
    Crnn,
    /// Multi-kernel convolutions, plain GRU stack.
    Icrnn,
    /// Single-kernel convolutions, densely wired GRU stack.
    Cdrnn,
    /// Multi-kernel convolutions, densely wired GRU stack.
    Chrononet,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Crnn,
        Architecture::Icrnn,
        Architecture::Cdrnn,
        Architecture::Chrononet,
    ];

    pub fn dense_wiring(self) -> bool {
        matches!(self, Architecture::Cdrnn | Architecture::Chrononet)
    }

    pub fn multi_kernel(self) -> bool {
        matches!(self, Architecture::Icrnn | Architecture::Chrononet)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Crnn => "crnn",
            Architecture::Icrnn => "icrnn",
            Architecture::Cdrnn => "cdrnn",
            Architecture::Chrononet => "chrononet",
        }
    }

    /// Display name as used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Architecture::Crnn => "C-RNN",
            Architecture::Icrnn => "IC-RNN",
            Architecture::Cdrnn => "C-DRNN",
            Architecture::Chrononet => "ChronoNet",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "crnn" => Ok(Architecture::Crnn),
            "icrnn" => Ok(Architecture::Icrnn),
            "cdrnn" => Ok(Architecture::Cdrnn),
            "chrononet" => Ok(Architecture::Chrononet),
            other => Err(Error::config(
                "architecture",
                format!("unknown architecture `{other}` (crnn, icrnn, cdrnn, chrononet)"),
            )),
        }
    }
}

/// Numeric mode: 32-bit for training, 64-bit for gradient checking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Train,
    Check,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Train => "train",
            Precision::Check => "check",
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "f32" | "f32check" => Ok(Precision::Train),
            "check" | "f64" | "f64check" => Ok(Precision::Check),
            other => Err(Error::config("precision", format!("unknown precision `{other}`"))),
        }
    }
}

/// Which GRU states feed the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Readout {
    /// Last time step of the final GRU layer.
    #[default]
    Last,
    /// Last time step of every GRU layer, concatenated.
    AllLayers,
}

impl FromStr for Readout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "last" => Ok(Readout::Last),
            "all" | "all_layers" => Ok(Readout::AllLayers),
            other => Err(Error::config("readout", format!("unknown readout `{other}` (last, all)"))),
        }
    }
}

impl Readout {
    pub fn as_str(self) -> &'static str {
        match self {
            Readout::Last => "last",
            Readout::AllLayers => "all",
        }
    }
}

/// One convolutional stage: a branch per kernel length, `filters` output
/// channels per branch, shared stride.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvBlockSpec {
    pub kernel_lengths: Vec<usize>,
    pub filters_per_kernel: usize,
    pub stride: usize,
}

impl ConvBlockSpec {
    pub fn new(kernel_lengths: Vec<usize>, filters_per_kernel: usize, stride: usize) -> Self {
        ConvBlockSpec {
            kernel_lengths,
            filters_per_kernel,
            stride,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernel_lengths.len() * self.filters_per_kernel
    }

    fn to_text(&self) -> String {
        format!(
            "{}/{}/{}",
            join(&self.kernel_lengths),
            self.filters_per_kernel,
            self.stride
        )
    }

    fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('/').collect();
        if parts.len() != 3 {
            return Err(Error::config(
                "conv_blocks",
                format!("block `{s}` is not `kernels/filters/stride`"),
            ));
        }
        Ok(ConvBlockSpec {
            kernel_lengths: parse_list("conv_blocks", parts[0])?,
            filters_per_kernel: parse_num("conv_blocks", parts[1])?,
            stride: parse_num("conv_blocks", parts[2])?,
        })
    }
}

/// Declarative description of a network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub input_channels: usize,
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub gru_widths: Vec<usize>,
    pub num_classes: usize,
    pub precision: Precision,
    pub readout: Readout,
}

pub const DEFAULT_KERNELS: [usize; 3] = [2, 4, 8];
pub const DEFAULT_SINGLE_KERNEL: usize = 4;
pub const DEFAULT_FILTERS: usize = 32;
pub const DEFAULT_STRIDE: usize = 2;
pub const DEFAULT_BLOCKS: usize = 3;
pub const DEFAULT_GRU_WIDTHS: [usize; 4] = [32, 32, 32, 32];
pub const DEFAULT_INPUT_CHANNELS: usize = 22;

impl ModelConfig {
    /// Default network of each family: three stride-2 blocks of 32 filters
    /// per kernel (kernels 2, 4, 8 for the multi-kernel families, 4 for the
    /// single-kernel ones), four GRU layers of width 32, two classes.
    pub fn preset(architecture: Architecture) -> Self {
        let kernels = if architecture.multi_kernel() {
            DEFAULT_KERNELS.to_vec()
        } else {
            vec![DEFAULT_SINGLE_KERNEL]
        };
        ModelConfig {
            architecture,
            input_channels: DEFAULT_INPUT_CHANNELS,
            conv_blocks: vec![
                ConvBlockSpec::new(kernels, DEFAULT_FILTERS, DEFAULT_STRIDE);
                DEFAULT_BLOCKS
            ],
            gru_widths: DEFAULT_GRU_WIDTHS.to_vec(),
            num_classes: 2,
            precision: Precision::Train,
            readout: Readout::Last,
        }
    }

    /// Uniform blocks: every block uses the same kernels, filters and stride.
    pub fn uniform(
        architecture: Architecture,
        input_channels: usize,
        blocks: usize,
        kernel_lengths: &[usize],
        filters: usize,
        stride: usize,
        gru_widths: &[usize],
        num_classes: usize,
    ) -> Self {
        ModelConfig {
            architecture,
            input_channels,
            conv_blocks: vec![ConvBlockSpec::new(kernel_lengths.to_vec(), filters, stride); blocks],
            gru_widths: gru_widths.to_vec(),
            num_classes,
            precision: Precision::Train,
            readout: Readout::Last,
        }
    }

    pub fn dense_wiring(&self) -> bool {
        self.architecture.dense_wiring()
    }

    /// Checks every schema invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        for (i, b) in self.conv_blocks.iter().enumerate() {
            let n = b.kernel_lengths.len();
            if self.architecture.multi_kernel() && n < 2 {
                return Err(Error::config(
                    format!("conv_blocks[{i}].kernel_lengths"),
                    format!("{} needs at least two kernel lengths per block", self.architecture),
                ));
            }
            if !self.architecture.multi_kernel() && n != 1 {
                return Err(Error::config(
                    format!("conv_blocks[{i}].kernel_lengths"),
                    format!("{} uses exactly one kernel length per block", self.architecture),
                ));
            }
        }
        Ok(())
    }

    /// Dimension checks only, without the per-family kernel-count rule.
    pub(crate) fn validate_structure(&self) -> Result<()> {
        if self.input_channels == 0 {
            return Err(Error::config("input_channels", "must be positive"));
        }
        if self.conv_blocks.is_empty() {
            return Err(Error::config("conv_blocks", "at least one block required"));
        }
        if self.gru_widths.is_empty() || self.gru_widths.contains(&0) {
            return Err(Error::config("gru_widths", "must be a non-empty list of positive widths"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "at least two classes required"));
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.kernel_lengths.is_empty() || b.kernel_lengths.contains(&0) {
                return Err(Error::config(
                    format!("conv_blocks[{i}].kernel_lengths"),
                    "kernel lengths must be positive",
                ));
            }
            if b.filters_per_kernel == 0 {
                return Err(Error::config(format!("conv_blocks[{i}].filters"), "must be positive"));
            }
            if b.stride == 0 {
                return Err(Error::config(format!("conv_blocks[{i}].stride"), "must be positive"));
            }
        }
        Ok(())
    }

    /// Channel count after each convolutional block.
    pub fn conv_channels(&self) -> Vec<usize> {
        self.conv_blocks.iter().map(ConvBlockSpec::out_channels).collect()
    }

    /// Sequence length after each convolutional block for input length `len`.
    pub fn conv_lengths(&self, len: usize) -> Vec<usize> {
        let mut t = len;
        self.conv_blocks
            .iter()
            .map(|b| {
                t = t.div_ceil(b.stride);
                t
            })
            .collect()
    }

    pub fn conv_output_channels(&self) -> usize {
        self.conv_blocks.last().map(ConvBlockSpec::out_channels).unwrap_or(0)
    }

    /// Declared input width of each GRU layer.
    pub fn gru_input_widths(&self) -> Vec<usize> {
        let ext = self.conv_output_channels();
        (0..self.gru_widths.len())
            .map(|k| crate::nn::wired_input_width(ext, &self.gru_widths, k, self.dense_wiring()))
            .collect()
    }

    pub fn readout_width(&self) -> usize {
        match self.readout {
            Readout::Last => *self.gru_widths.last().unwrap_or(&0),
            Readout::AllLayers => self.gru_widths.iter().sum(),
        }
    }

    /// Closed-form count of learnable scalars:
    /// conv block `Σ_k f·(c_in·k + 1)`, GRU layer `3(m·n + m² + m)` for input
    /// `n` and hidden `m`, readout `h·K + K`.
    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        let mut c_in = self.input_channels;
        for b in &self.conv_blocks {
            total += b
                .kernel_lengths
                .iter()
                .map(|&k| b.filters_per_kernel * (c_in * k + 1))
                .sum::<usize>();
            c_in = b.out_channels();
        }
        for (&m, n) in self.gru_widths.iter().zip(self.gru_input_widths()) {
            total += 3 * (m * n + m * m + m);
        }
        let h = self.readout_width();
        total + h * self.num_classes + self.num_classes
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        let blocks: Vec<String> = self.conv_blocks.iter().map(ConvBlockSpec::to_text).collect();
        format!(
            "architecture={}\ninput_channels={}\nconv_blocks={}\ngru_widths={}\nnum_classes={}\nprecision={}\nreadout={}\n",
            self.architecture,
            self.input_channels,
            blocks.join(";"),
            join(&self.gru_widths),
            self.num_classes,
            self.precision.as_str(),
            self.readout.as_str(),
        )
    }

    /// Parses [`ModelConfig::to_text`] output. Unknown keys are rejected;
    /// `#` starts a comment line.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::preset(Architecture::Chrononet);
        let mut seen_arch = false;
        for (key, value) in key_values(text)? {
            cfg.apply(&key, &value)?;
            seen_arch |= key == "architecture";
        }
        if !seen_arch {
            return Err(Error::config("architecture", "missing"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one field from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "architecture" => self.architecture = value.parse()?,
            "input_channels" => self.input_channels = parse_num(key, value)?,
            "conv_blocks" => {
                self.conv_blocks = value
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(ConvBlockSpec::parse)
                    .collect::<Result<_>>()?
            }
            "gru_widths" => self.gru_widths = parse_list(key, value)?,
            "num_classes" => self.num_classes = parse_num(key, value)?,
            "precision" => self.precision = value.parse()?,
            "readout" => self.readout = value.parse()?,
            other => return Err(Error::config(other, "unknown model configuration key")),
        }
        Ok(())
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse_num<N: FromStr>(field: &str, s: &str) -> Result<N> {
    s.trim()
        .parse()
        .map_err(|_| Error::config(field, format!("`{}` is not a valid number", s.trim())))
}

pub(crate) fn parse_list(field: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| parse_num(field, p))
        .collect()
}

/// Splits `key=value` text into pairs, skipping blanks and `#` comments.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}", lineno + 1), format!("`{line}` is not key=value"))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for arch in Architecture::ALL {
            let c = ModelConfig::preset(arch);
            c.validate().unwrap();
            assert_eq!(c.dense_wiring(), arch.dense_wiring());
        }
    }

    #[test]
    fn text_round_trip() {
        let mut c = ModelConfig::preset(Architecture::Icrnn);
        c.conv_blocks[1].kernel_lengths = vec![14, 16, 18];
        c.readout = Readout::AllLayers;
        assert_eq!(ModelConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn invariant_violations_name_field() {
        let mut c = ModelConfig::preset(Architecture::Crnn);
        c.conv_blocks[0].kernel_lengths = vec![2, 4];
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "conv_blocks[0].kernel_lengths"),
            other => panic!("{other:?}"),
        }
        let mut c = ModelConfig::preset(Architecture::Chrononet);
        c.num_classes = 1;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "num_classes"));
        let mut c = ModelConfig::preset(Architecture::Chrononet);
        c.gru_widths.clear();
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "gru_widths"));
    }

    #[test]
    fn unknown_key_rejected() {
        let text = ModelConfig::preset(Architecture::Crnn).to_text() + "dropout=0.5\n";
        assert!(matches!(ModelConfig::from_text(&text), Err(Error::Config { field, .. }) if field == "dropout"));
    }

    #[test]
    fn default_shape_laws() {
        let c = ModelConfig::preset(Architecture::Chrononet);
        assert_eq!(c.conv_lengths(15000), vec![7500, 3750, 1875]);
        assert_eq!(c.conv_channels(), vec![96, 96, 96]);
        assert_eq!(c.gru_input_widths(), vec![96, 32, 64, 96]);
    }

    #[test]
    fn architecture_names() {
        for arch in Architecture::ALL {
            assert_eq!(arch.as_str().parse::<Architecture>().unwrap(), arch);
            assert_eq!(arch.display_name().parse::<Architecture>().unwrap(), arch);
        }
    }
}

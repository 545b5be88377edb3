pub mod cv;
pub mod eval;
pub mod gradcheck;
pub mod predict;
pub mod prepare;
pub mod synth;
pub mod train;

use std::path::{Path, PathBuf};

use chrononet::data::{read_header, Dataset};
use chrononet::train::Checkpoint;
use chrononet::Error;

use crate::error::{CliError, CliResult, Context};

pub(crate) fn required(path: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    path.clone()
        .ok_or_else(|| CliError::usage(format!("missing --{what} (or `{}` in the config file)", what.replace('-', "_"))))
}

pub(crate) fn load_dataset(path: &Path) -> CliResult<Dataset> {
    Dataset::import(path).context(path.display())
}

pub(crate) fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Checkpoint::load(path).context(path.display())
}

/// Refuses a dataset whose channel count differs from what `ckpt` expects,
/// reading only the container header.
pub(crate) fn check_header(ckpt: &Checkpoint, path: &Path) -> CliResult<()> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let header = read_header(&bytes).context(path.display())?;
    let expect = ckpt.config.input_channels;
    if header.channels as usize != expect {
        return Err(Error::Config {
            field: "input_channels".into(),
            message: format!(
                "checkpoint expects {expect} channels but {} has {}",
                path.display(),
                header.channels
            ),
        }
        .into());
    }
    Ok(())
}

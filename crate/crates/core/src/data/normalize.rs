use std::path::{Path, PathBuf};

use super::dataset::{Dataset, DATASET_MAGIC, DATASET_VERSION};
use crate::bytes::{read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};

/// Type flag marking a normalization-statistics file.
pub const STATS_FLAG: u8 = 1;

/// Per-channel mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Statistics over every time point of every window in `ds`.
    pub fn compute(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::data("cannot compute normalization statistics of an empty set"));
        }
        let (c, l) = (ds.channels(), ds.length());
        let mut sum = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for i in 0..ds.len() {
            for (ch, row) in ds.sample(i).chunks(l).enumerate() {
                for &v in row {
                    sum[ch] += v as f64;
                }
            }
        }
        let n = (ds.len() * l) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        for i in 0..ds.len() {
            for (ch, row) in ds.sample(i).chunks(l).enumerate() {
                for &v in row {
                    let d = v as f64 - mean[ch];
                    sq[ch] += d * d;
                }
            }
        }
        let std = sq.iter().map(|s| (s / n).sqrt()).collect();
        Ok(NormStats { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Z-scores every channel in place; zero-variance channels are only
    /// centered.
    pub fn apply(&self, ds: &mut Dataset) -> Result<()> {
        if ds.channels() != self.channels() {
            return Err(Error::shape(format!(
                "statistics for {} channels applied to {} channels",
                self.channels(),
                ds.channels()
            )));
        }
        let l = ds.length();
        for (k, row) in ds.values_mut().chunks_mut(l).enumerate() {
            let ch = k % self.channels();
            let (m, s) = (self.mean[ch], self.std[ch]);
            for v in row {
                let centered = *v as f64 - m;
                *v = if s > 0.0 { centered / s } else { centered } as f32;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 16 * self.channels());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.push(STATS_FLAG);
        out.extend_from_slice(&(self.channels() as u32).to_le_bytes());
        for (m, s) in self.mean.iter().zip(&self.std) {
            out.extend_from_slice(&m.to_le_bytes());
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(DATASET_MAGIC)?;
        r.version(DATASET_VERSION)?;
        let at = r.offset();
        let flag = r.u8("type flag")?;
        if flag != STATS_FLAG {
            return Err(Error::format(at, format!("type flag {flag} is not a statistics file")));
        }
        let c = r.u32("channel count")? as usize;
        let mut mean = Vec::with_capacity(c.min(1 << 16));
        let mut std = Vec::with_capacity(c.min(1 << 16));
        for _ in 0..c {
            mean.push(r.f64("mean")?);
            std.push(r.f64("standard deviation")?);
        }
        r.finish()?;
        Ok(NormStats { mean, std })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

/// Sidecar path holding normalization statistics: `<path>.stats`.
pub fn stats_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".stats");
    path.with_file_name(name)
}

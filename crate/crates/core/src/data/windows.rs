use super::dataset::Split;
use super::montage::Recording;
use crate::error::{Error, Result};

/// Fixed-length windowing of sessions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowSpec {
    pub seconds: f64,
    /// Rate recordings must have before windowing.
    pub rate: f64,
    pub max_train_windows: usize,
    pub test_windows: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            seconds: 60.0,
            rate: 250.0,
            max_train_windows: 11,
            test_windows: 1,
        }
    }
}

impl WindowSpec {
    pub fn window_samples(&self) -> usize {
        (self.seconds * self.rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.seconds > 0.0 && self.rate > 0.0) || self.window_samples() == 0 {
            return Err(Error::config("window_seconds", "window must span at least one sample"));
        }
        if self.test_windows == 0 {
            return Err(Error::config("test_windows", "must be positive"));
        }
        Ok(())
    }
}

/// One window: `channels × window_samples` values, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub values: Vec<f32>,
}

/// Consecutive non-overlapping windows from `t = 0`.
///
/// Training sessions yield `min(max_train_windows, floor(duration / seconds))`
/// windows; test sessions yield `test_windows` windows and must be long
/// enough to hold them.
pub fn extract_windows(rec: &Recording, spec: &WindowSpec, split: Split) -> Result<Vec<Window>> {
    spec.validate()?;
    if rec.rate != spec.rate {
        return Err(Error::data(format!(
            "session {} is sampled at {} Hz, windowing expects {} Hz",
            rec.session_id, rec.rate, spec.rate
        )));
    }
    let w = spec.window_samples();
    let available = rec.samples() / w;
    let count = match split {
        Split::Train => available.min(spec.max_train_windows),
        Split::Test => {
            if available < spec.test_windows {
                return Err(Error::data(format!(
                    "test session {} lasts {:.1} s, shorter than {} window(s) of {} s",
                    rec.session_id,
                    rec.duration_seconds(),
                    spec.test_windows,
                    spec.seconds
                )));
            }
            spec.test_windows
        }
    };
    Ok((0..count)
        .map(|k| {
            let start = k * w;
            let mut values = Vec::with_capacity(rec.channels.len() * w);
            for ch in &rec.channels {
                values.extend(ch[start..start + w].iter().map(|&v| v as f32));
            }
            Window { start, values }
        })
        .collect())
}

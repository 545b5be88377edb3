use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const TARGET_RATE: f64 = 250.0;
pub const FIR_TAPS: usize = 63;

/// Hamming-windowed sinc low-pass with cutoff `cutoff` (cycles per sample),
/// normalized to unit gain at 0 Hz.
pub fn lowpass_taps(cutoff: f64, taps: usize) -> Vec<f64> {
    let m = (taps - 1) as f64 / 2.0;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let x = n as f64 - m;
            let sinc = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            let w = 0.54 - 0.46 * (2.0 * PI * n as f64 / (taps - 1) as f64).cos();
            sinc * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Centered FIR application (no phase shift); samples beyond the edges
/// repeat the edge value.
fn filter_centered(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() as isize;
    let half = (h.len() / 2) as isize;
    (0..n)
        .map(|i| {
            h.iter()
                .enumerate()
                .map(|(k, &hk)| hk * x[(i + k as isize - half).clamp(0, n - 1) as usize])
                .sum()
        })
        .collect()
}

/// Converts `x` sampled at `from_hz` to `to_hz`.
///
/// Downsampling low-pass filters at `0.45 · to_hz` with a 63-tap FIR before
/// linear interpolation onto the target grid; upsampling interpolates only;
/// equal rates return the input. Output length is `floor(n · to / from)`.
pub fn resample(x: &[f64], from_hz: f64, to_hz: f64) -> Result<Vec<f64>> {
    if !(from_hz > 0.0 && to_hz > 0.0 && from_hz.is_finite() && to_hz.is_finite()) {
        return Err(Error::contract(format!(
            "sampling rates must be positive, got {from_hz} → {to_hz}"
        )));
    }
    if from_hz == to_hz {
        return Ok(x.to_vec());
    }
    let filtered;
    let src = if to_hz < from_hz {
        filtered = filter_centered(x, &lowpass_taps(0.45 * to_hz / from_hz, FIR_TAPS));
        &filtered
    } else {
        x
    };
    let out_len = ((x.len() as f64) * to_hz / from_hz + 1e-9).floor() as usize;
    let ratio = from_hz / to_hz;
    Ok((0..out_len)
        .map(|j| {
            let pos = j as f64 * ratio;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let a = src[i.min(src.len() - 1)];
            let b = src[(i + 1).min(src.len() - 1)];
            if frac == 0.0 {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect())
}

use std::path::Path;

use super::edf::EdfRecording;
use crate::bytes::read_file;
use crate::error::{Error, Result};

const DEFAULT_TCP: &str = include_str!("../../data/tcp_montage.txt");

/// One bipolar derivation: `anode − cathode`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MontagePair {
    pub anode: String,
    pub cathode: String,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MontageDef {
    pub pairs: Vec<MontagePair>,
}

/// Multichannel signal in physical units at one sampling rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub channel_names: Vec<String>,
    /// `channels × samples`
    pub channels: Vec<Vec<f64>>,
    pub rate: f64,
    pub patient_id: String,
    pub session_id: String,
}

impl Recording {
    pub fn new(
        channel_names: Vec<String>,
        channels: Vec<Vec<f64>>,
        rate: f64,
        patient_id: impl Into<String>,
        session_id: impl Into<String>,
    ) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::data(format!("sampling rate {rate} is not positive")));
        }
        if channel_names.len() != channels.len() {
            return Err(Error::data("channel names and channel data differ in count"));
        }
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::data("channels differ in length"));
            }
        }
        Ok(Recording {
            channel_names,
            channels,
            rate,
            patient_id: patient_id.into(),
            session_id: session_id.into(),
        })
    }

    pub fn samples(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples() as f64 / self.rate
    }
}

impl MontageDef {
    /// The shipped 22-channel TCP bipolar montage.
    pub fn default_tcp() -> Self {
        Self::parse(DEFAULT_TCP).expect("shipped montage parses")
    }

    /// Lines `anode,cathode,name`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
                return Err(Error::data(format!(
                    "montage line {}: expected `anode,cathode,name`, got `{line}`",
                    i + 1
                )));
            }
            pairs.push(MontagePair {
                anode: parts[0].to_string(),
                cathode: parts[1].to_string(),
                name: parts[2].to_string(),
            });
        }
        if pairs.is_empty() {
            return Err(Error::data("montage defines no channels"));
        }
        Ok(MontageDef { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::data(format!("{} is not UTF-8", path.display())))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Electrode name with the common `EEG ` prefix and `-REF`/`-LE` suffixes
/// removed, upper-cased.
pub fn normalize_label(label: &str) -> String {
    let mut s = label.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG ") {
        s = rest.trim().to_string();
    }
    for suffix in ["-REF", "-LE", "-AVG"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.trim().to_string();
            break;
        }
    }
    s
}

fn resolve(rec: &EdfRecording, label: &str) -> Result<usize> {
    let want = normalize_label(label);
    let hits: Vec<usize> = rec
        .signals
        .iter()
        .enumerate()
        .filter(|(_, s)| normalize_label(&s.label) == want)
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [i] => Ok(*i),
        [] => Err(Error::data(format!("montage label `{label}` matches no signal"))),
        _ => Err(Error::data(format!(
            "montage label `{label}` matches {} signals",
            hits.len()
        ))),
    }
}

/// Derives every montage channel as anode minus cathode.
pub fn apply_montage(
    rec: &EdfRecording,
    montage: &MontageDef,
    patient_id: &str,
    session_id: &str,
) -> Result<Recording> {
    let mut names = Vec::with_capacity(montage.len());
    let mut channels = Vec::with_capacity(montage.len());
    let mut rate: Option<f64> = None;
    for p in &montage.pairs {
        let a = resolve(rec, &p.anode)?;
        let c = resolve(rec, &p.cathode)?;
        let (ra, rc) = (rec.rate(a), rec.rate(c));
        if ra != rc {
            return Err(Error::data(format!(
                "channel {}: {} is sampled at {ra} Hz but {} at {rc} Hz",
                p.name, p.anode, p.cathode
            )));
        }
        if let Some(r) = rate {
            if r != ra {
                return Err(Error::data(format!(
                    "channel {} is sampled at {ra} Hz, earlier channels at {r} Hz",
                    p.name
                )));
            }
        }
        rate = Some(ra);
        let diff = rec.signals[a]
            .samples
            .iter()
            .zip(&rec.signals[c].samples)
            .map(|(x, y)| x - y)
            .collect();
        names.push(p.name.clone());
        channels.push(diff);
    }
    Recording::new(names, channels, rate.unwrap_or(1.0), patient_id, session_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::edf::{EdfHeader, EdfSignal};

    fn rec(signals: Vec<(&str, Vec<f64>)>) -> EdfRecording {
        let n = signals[0].1.len();
        EdfRecording {
            header: EdfHeader {
                records: 1,
                ..Default::default()
            },
            signals: signals
                .into_iter()
                .map(|(l, s)| EdfSignal::new(l, -1000.0, 1000.0, n, s))
                .collect(),
        }
    }

    #[test]
    fn default_has_22_channels() {
        let m = MontageDef::default_tcp();
        assert_eq!(m.len(), 22);
        assert_eq!(m.pairs[0].name, "FP1-F7");
    }

    #[test]
    fn subtraction() {
        let r = rec(vec![("EEG C3-REF", vec![5.0, 5.0]), ("EEG CZ-REF", vec![2.0, 3.0])]);
        let m = MontageDef::parse("C3,CZ,C3-CZ\nC3,C3,zero").unwrap();
        let out = apply_montage(&r, &m, "p", "s").unwrap();
        assert_eq!(out.channels, vec![vec![3.0, 2.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn unresolved_label_is_named() {
        let r = rec(vec![("EEG C3-REF", vec![1.0])]);
        let m = MontageDef::parse("C3,PZ,x").unwrap();
        assert!(matches!(apply_montage(&r, &m, "p", "s"), Err(Error::Data(msg)) if msg.contains("PZ")));
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("EEG FP1-REF"), "FP1");
        assert_eq!(normalize_label("eeg t3-le"), "T3");
        assert_eq!(normalize_label("Cz"), "CZ");
    }

    #[test]
    fn malformed_line() {
        assert!(MontageDef::parse("C3,CZ").is_err());
        assert!(MontageDef::parse("# only comments\n").is_err());
    }
}

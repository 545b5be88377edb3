use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bytes::{put_f32s, read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DATASET_MAGIC: &[u8; 4] = b"CNDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" | "eval" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split `{other}` (train, test)"))),
        }
    }
}

/// Provenance of one window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMeta {
    pub patient_id: String,
    pub session_id: String,
    pub split: Split,
}

impl SampleMeta {
    pub fn new(patient_id: impl Into<String>, session_id: impl Into<String>, split: Split) -> Self {
        SampleMeta {
            patient_id: patient_id.into(),
            session_id: session_id.into(),
            split,
        }
    }
}

/// Labeled windows of uniform shape `[channels × length]`, stored as 32-bit
/// values back to back.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    channels: usize,
    length: usize,
    values: Vec<f32>,
    labels: Vec<usize>,
    meta: Vec<SampleMeta>,
}

impl Dataset {
    pub fn new(channels: usize, length: usize) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(Error::shape(format!(
                "dataset windows must be non-empty, got {channels} × {length}"
            )));
        }
        Ok(Dataset {
            channels,
            length,
            values: Vec::new(),
            labels: Vec::new(),
            meta: Vec::new(),
        })
    }

    pub fn push(&mut self, window: &[f32], label: usize, meta: SampleMeta) -> Result<()> {
        if window.len() != self.window_len() {
            return Err(Error::shape(format!(
                "window of {} values, dataset expects {} × {}",
                window.len(),
                self.channels,
                self.length
            )));
        }
        if label > u16::MAX as usize {
            return Err(Error::data(format!("label {label} exceeds the 16-bit label range")));
        }
        self.values.extend_from_slice(window);
        self.labels.push(label);
        self.meta.push(meta);
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn window_len(&self) -> usize {
        self.channels * self.length
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn meta(&self) -> &[SampleMeta] {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut [SampleMeta] {
        &mut self.meta
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let n = self.window_len();
        &self.values[i * n..(i + 1) * n]
    }

    /// One past the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut c = vec![0; classes.max(self.num_classes())];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Stacks the selected windows into `[indices.len() × channels × length]`.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let mut data = Vec::with_capacity(indices.len() * self.window_len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::contract(format!("sample {i} of {}", self.len())));
            }
            data.extend(self.sample(i).iter().map(|&v| T::cast(v as f64)));
        }
        Tensor::new(vec![indices.len(), self.channels, self.length], data)
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = Dataset {
            channels: self.channels,
            length: self.length,
            values: Vec::with_capacity(indices.len() * self.window_len()),
            labels: Vec::with_capacity(indices.len()),
            meta: Vec::with_capacity(indices.len()),
        };
        for &i in indices {
            out.values.extend_from_slice(self.sample(i));
            out.labels.push(self.labels[i]);
            out.meta.push(self.meta[i].clone());
        }
        out
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.meta[i].split == split).collect()
    }

    pub fn split(&self, split: Split) -> Dataset {
        self.subset(&self.indices_of(split))
    }

    /// Patient id of every sample, the grouping key for cross-validation.
    pub fn groups(&self) -> Vec<&str> {
        self.meta.iter().map(|m| m.patient_id.as_str()).collect()
    }

    /// Appends all samples of `other`.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if (other.channels, other.length) != (self.channels, self.length) {
            return Err(Error::shape(format!(
                "cannot merge {} × {} windows into a {} × {} dataset",
                other.channels, other.length, self.channels, self.length
            )));
        }
        self.values.extend_from_slice(&other.values);
        self.labels.extend_from_slice(&other.labels);
        self.meta.extend(other.meta.iter().cloned());
        Ok(())
    }

    /// Errors if any patient id occurs under both splits.
    pub fn check_patient_split(&self) -> Result<()> {
        check_patient_split(self.meta.iter().map(|m| (m.patient_id.as_str(), m.split)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.len() * (2 + 4 * self.window_len()));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.length as u32).to_le_bytes());
        for i in 0..self.len() {
            out.extend_from_slice(&(self.labels[i] as u16).to_le_bytes());
            put_f32s(&mut out, self.sample(i));
        }
        out
    }

    /// Parses a container; samples get placeholder metadata (one patient
    /// per sample, train split).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes)?;
        let mut r = ByteReader::new(bytes);
        r.take(DATASET_HEADER_LEN, "header")?;
        let n = header.samples as usize;
        let mut ds = Dataset::new(header.channels as usize, header.length as usize)
            .map_err(|e| Error::format(16, e.to_string()))?;
        let expected = n
            .checked_mul(2 + 4 * ds.window_len())
            .and_then(|b| b.checked_add(DATASET_HEADER_LEN));
        if expected != Some(bytes.len()) {
            let at = if expected.is_some_and(|e| e < bytes.len()) {
                expected.unwrap() as u64
            } else {
                bytes.len() as u64
            };
            return Err(Error::format(
                at,
                format!(
                    "header declares {n} samples of {} × {} but the file holds {} bytes",
                    ds.channels,
                    ds.length,
                    bytes.len()
                ),
            ));
        }
        ds.values.reserve(n * ds.window_len());
        for i in 0..n {
            let label = r.u16("label")? as usize;
            let w = r.f32s(ds.window_len(), "window values")?;
            ds.values.extend_from_slice(&w);
            ds.labels.push(label);
            ds.meta.push(SampleMeta::new(format!("s{i}"), format!("s{i}"), Split::Train));
        }
        r.finish()?;
        Ok(ds)
    }

    /// Writes the container to `path` and metadata to [`meta_path`].
    pub fn export(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())?;
        if let Err(e) = write_atomic(&meta_path(path), self.meta_csv().as_bytes()) {
            let _ = std::fs::remove_file(path);
            return Err(e);
        }
        Ok(())
    }

    /// Reads a container and, when present, its metadata sidecar.
    pub fn import(path: &Path) -> Result<Self> {
        let mut ds = Self::from_bytes(&read_file(path)?)?;
        let mp = meta_path(path);
        if mp.exists() {
            let meta = parse_meta_csv(&read_file(&mp)?, ds.len())?;
            ds.meta = meta;
        }
        Ok(ds)
    }

    fn meta_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "label", "patient_id", "session_id", "split"])
            .expect("in-memory write");
        for (i, m) in self.meta.iter().enumerate() {
            w.write_record([
                i.to_string(),
                self.labels[i].to_string(),
                m.patient_id.clone(),
                m.session_id.clone(),
                m.split.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
    }
}

pub(crate) fn check_patient_split<'a>(rows: impl Iterator<Item = (&'a str, Split)>) -> Result<()> {
    let mut seen: std::collections::HashMap<&str, Split> = std::collections::HashMap::new();
    let mut leaked = std::collections::BTreeSet::new();
    for (p, s) in rows {
        match seen.get(p) {
            Some(&prev) if prev != s => {
                leaked.insert(p);
            }
            Some(_) => {}
            None => {
                seen.insert(p, s);
            }
        }
    }
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::data(format!(
            "patients present in both train and test splits: {}",
            leaked.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

const DATASET_HEADER_LEN: usize = 24;

/// Fixed header fields of a dataset container.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetHeader {
    pub samples: u64,
    pub channels: u32,
    pub length: u32,
}

/// Reads only the fixed header.
pub fn read_header(bytes: &[u8]) -> Result<DatasetHeader> {
    let mut r = ByteReader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    Ok(DatasetHeader {
        samples: r.u64("sample count")?,
        channels: r.u32("channel count")?,
        length: r.u32("window length")?,
    })
}

/// Sidecar path holding per-sample metadata: `<path>.meta.csv`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.csv");
    path.with_file_name(name)
}

fn parse_meta_csv(bytes: &[u8], expected: usize) -> Result<Vec<SampleMeta>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let mut out = Vec::with_capacity(expected);
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("metadata row {}: {e}", i + 1)))?;
        if rec.len() != 5 {
            return Err(Error::data(format!("metadata row {} has {} fields", i + 1, rec.len())));
        }
        out.push(SampleMeta::new(&rec[2], &rec[3], rec[4].parse()?));
    }
    if out.len() != expected {
        return Err(Error::data(format!(
            "metadata lists {} samples, container holds {expected}",
            out.len()
        )));
    }
    Ok(out)
}

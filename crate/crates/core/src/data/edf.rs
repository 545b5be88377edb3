//! EDF reader and writer (continuous records, no annotation channels).

use std::path::Path;

use crate::bytes::{read_file, write_atomic, ByteReader};
use crate::error::{Error, Result};

const FIXED_HEADER: usize = 256;
const SIGNAL_HEADER: usize = 256;

/// Recording-level header fields.
#[derive(Clone, Debug, PartialEq)]
pub struct EdfHeader {
    pub patient: String,
    pub recording: String,
    pub start_date: String,
    pub start_time: String,
    pub records: usize,
    /// Seconds per data record.
    pub record_duration: f64,
}

impl Default for EdfHeader {
    fn default() -> Self {
        EdfHeader {
            patient: "X X X X".into(),
            recording: "Startdate X X X X".into(),
            start_date: "01.01.00".into(),
            start_time: "00.00.00".into(),
            records: 0,
            record_duration: 1.0,
        }
    }
}

/// One signal with its scaling fields and physical samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EdfSignal {
    pub label: String,
    pub transducer: String,
    pub dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    /// Physical values.
    pub samples: Vec<f64>,
}

impl EdfSignal {
    /// A signal with the usual 16-bit digital range.
    pub fn new(
        label: impl Into<String>,
        physical_min: f64,
        physical_max: f64,
        samples_per_record: usize,
        samples: Vec<f64>,
    ) -> Self {
        EdfSignal {
            label: label.into(),
            transducer: String::new(),
            dimension: "uV".into(),
            physical_min,
            physical_max,
            digital_min: -32768,
            digital_max: 32767,
            prefiltering: String::new(),
            samples_per_record,
            samples,
        }
    }

    /// Physical value of one digital step.
    pub fn quantum(&self) -> f64 {
        (self.physical_max - self.physical_min) / (self.digital_max - self.digital_min) as f64
    }

    /// `p = pmin + (d − dmin) · (pmax − pmin) / (dmax − dmin)`
    pub fn to_physical(&self, d: i32) -> f64 {
        self.physical_min + (d - self.digital_min) as f64 * self.quantum()
    }

    /// Nearest digital value, clamped to the digital range.
    pub fn to_digital(&self, p: f64) -> i32 {
        let d = ((p - self.physical_min) / self.quantum()).round() + self.digital_min as f64;
        d.clamp(self.digital_min as f64, self.digital_max as f64) as i32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdfRecording {
    pub header: EdfHeader,
    pub signals: Vec<EdfSignal>,
}

impl EdfRecording {
    /// Sampling rate of signal `i` in Hz.
    pub fn rate(&self, i: usize) -> f64 {
        self.signals[i].samples_per_record as f64 / self.header.record_duration
    }

    pub fn duration_seconds(&self) -> f64 {
        self.header.records as f64 * self.header.record_duration
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let ns = self.signals.len();
        let records = self.header.records;
        for s in &self.signals {
            if s.samples.len() != records * s.samples_per_record {
                return Err(Error::data(format!(
                    "signal `{}` holds {} samples, {records} records of {} expected",
                    s.label,
                    s.samples.len(),
                    s.samples_per_record
                )));
            }
            if s.digital_min >= s.digital_max || s.physical_min == s.physical_max {
                return Err(Error::data(format!("signal `{}` has an empty scaling range", s.label)));
            }
            if s.digital_min < i16::MIN as i32 || s.digital_max > i16::MAX as i32 {
                return Err(Error::data(format!(
                    "signal `{}` digital range exceeds 16 bits",
                    s.label
                )));
            }
        }
        let h = &self.header;
        let header_bytes = FIXED_HEADER + ns * SIGNAL_HEADER;
        let mut out = Vec::with_capacity(header_bytes);
        put_field(&mut out, "0", 8);
        put_field(&mut out, &h.patient, 80);
        put_field(&mut out, &h.recording, 80);
        put_field(&mut out, &h.start_date, 8);
        put_field(&mut out, &h.start_time, 8);
        put_field(&mut out, &header_bytes.to_string(), 8);
        put_field(&mut out, "", 44);
        put_field(&mut out, &records.to_string(), 8);
        put_field(&mut out, &format_number(h.record_duration, 8)?, 8);
        put_field(&mut out, &ns.to_string(), 4);

        // scaling uses the values as they will be read back
        let mut scaled = Vec::with_capacity(ns);
        let mut pmins = Vec::with_capacity(ns);
        let mut pmaxs = Vec::with_capacity(ns);
        for s in &self.signals {
            let pmin = format_number(s.physical_min, 8)?;
            let pmax = format_number(s.physical_max, 8)?;
            let mut t = s.clone();
            t.physical_min = pmin.parse().unwrap();
            t.physical_max = pmax.parse().unwrap();
            if t.physical_min == t.physical_max {
                return Err(Error::data(format!(
                    "signal `{}` physical range collapses when written",
                    s.label
                )));
            }
            pmins.push(pmin);
            pmaxs.push(pmax);
            scaled.push(t);
        }
        for s in &self.signals {
            put_field(&mut out, &s.label, 16);
        }
        for s in &self.signals {
            put_field(&mut out, &s.transducer, 80);
        }
        for s in &self.signals {
            put_field(&mut out, &s.dimension, 8);
        }
        for v in &pmins {
            put_field(&mut out, v, 8);
        }
        for v in &pmaxs {
            put_field(&mut out, v, 8);
        }
        for s in &self.signals {
            put_field(&mut out, &s.digital_min.to_string(), 8);
        }
        for s in &self.signals {
            put_field(&mut out, &s.digital_max.to_string(), 8);
        }
        for s in &self.signals {
            put_field(&mut out, &s.prefiltering, 80);
        }
        for s in &self.signals {
            put_field(&mut out, &s.samples_per_record.to_string(), 8);
        }
        for _ in &self.signals {
            put_field(&mut out, "", 32);
        }
        debug_assert_eq!(out.len(), header_bytes);
        for r in 0..records {
            for s in &scaled {
                let n = s.samples_per_record;
                for &p in &s.samples[r * n..(r + 1) * n] {
                    out.extend_from_slice(&(s.to_digital(p) as i16).to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let _version = field(&mut r, 8, "version")?;
        let patient = field(&mut r, 80, "patient")?.to_string();
        let recording = field(&mut r, 80, "recording")?.to_string();
        let start_date = field(&mut r, 8, "start date")?.to_string();
        let start_time = field(&mut r, 8, "start time")?.to_string();
        let header_bytes: usize = number(&mut r, 8, "header size")?;
        field(&mut r, 44, "reserved")?;
        let records_at = r.offset();
        let declared_records: i64 = number(&mut r, 8, "record count")?;
        let duration_at = r.offset();
        let record_duration: f64 = number(&mut r, 8, "record duration")?;
        let ns_at = r.offset();
        let ns: usize = number(&mut r, 4, "signal count")?;
        if ns == 0 {
            return Err(Error::format(ns_at, "recording declares no signals"));
        }
        if !(record_duration > 0.0) {
            return Err(Error::format(duration_at, "record duration must be positive"));
        }
        if header_bytes != FIXED_HEADER + ns * SIGNAL_HEADER {
            return Err(Error::format(
                184,
                format!(
                    "header size {header_bytes} does not match {ns} signals ({} expected)",
                    FIXED_HEADER + ns * SIGNAL_HEADER
                ),
            ));
        }
        let texts = |r: &mut ByteReader, w: usize, what: &str| -> Result<Vec<String>> {
            (0..ns).map(|_| field(r, w, what).map(str::to_string)).collect()
        };
        let labels = texts(&mut r, 16, "label")?;
        let transducers = texts(&mut r, 80, "transducer")?;
        let dims = texts(&mut r, 8, "physical dimension")?;
        let pmin_at = r.offset();
        let pmins: Vec<f64> = (0..ns).map(|_| number(&mut r, 8, "physical minimum")).collect::<Result<_>>()?;
        let pmaxs: Vec<f64> = (0..ns).map(|_| number(&mut r, 8, "physical maximum")).collect::<Result<_>>()?;
        let dmin_at = r.offset();
        let dmins: Vec<i32> = (0..ns).map(|_| number(&mut r, 8, "digital minimum")).collect::<Result<_>>()?;
        let dmaxs: Vec<i32> = (0..ns).map(|_| number(&mut r, 8, "digital maximum")).collect::<Result<_>>()?;
        let prefilters = texts(&mut r, 80, "prefiltering")?;
        let spr: Vec<usize> = (0..ns).map(|_| number(&mut r, 8, "samples per record")).collect::<Result<_>>()?;
        texts(&mut r, 32, "reserved")?;

        for i in 0..ns {
            if dmins[i] >= dmaxs[i] {
                return Err(Error::format(
                    dmin_at + 8 * i as u64,
                    format!(
                        "signal `{}`: digital minimum {} is not below maximum {}",
                        labels[i], dmins[i], dmaxs[i]
                    ),
                ));
            }
            if pmins[i] == pmaxs[i] {
                return Err(Error::format(
                    pmin_at + 8 * i as u64,
                    format!("signal `{}`: physical minimum equals maximum", labels[i]),
                ));
            }
        }
        let record_bytes: usize = spr.iter().sum::<usize>() * 2;
        if record_bytes == 0 {
            return Err(Error::format(header_bytes as u64, "records hold no samples"));
        }
        let records = if declared_records < 0 {
            r.remaining() / record_bytes
        } else {
            declared_records as usize
        };
        let need = records
            .checked_mul(record_bytes)
            .ok_or_else(|| Error::format(records_at, "record count overflows"))?;
        if r.remaining() < need {
            return Err(Error::format(
                bytes.len() as u64,
                format!(
                    "file ends after {} data bytes, {records} records need {need}",
                    r.remaining()
                ),
            ));
        }

        let mut signals: Vec<EdfSignal> = (0..ns)
            .map(|i| EdfSignal {
                label: labels[i].clone(),
                transducer: transducers[i].clone(),
                dimension: dims[i].clone(),
                physical_min: pmins[i],
                physical_max: pmaxs[i],
                digital_min: dmins[i],
                digital_max: dmaxs[i],
                prefiltering: prefilters[i].clone(),
                samples_per_record: spr[i],
                samples: Vec::with_capacity(records * spr[i]),
            })
            .collect();
        for _ in 0..records {
            for s in &mut signals {
                let raw = r.take(2 * s.samples_per_record, "samples")?;
                for c in raw.chunks_exact(2) {
                    let d = i16::from_le_bytes([c[0], c[1]]) as i32;
                    let p = s.to_physical(d);
                    s.samples.push(p);
                }
            }
        }
        Ok(EdfRecording {
            header: EdfHeader {
                patient,
                recording,
                start_date,
                start_time,
                records,
                record_duration,
            },
            signals,
        })
    }
}

pub fn read_edf(path: &Path) -> Result<EdfRecording> {
    EdfRecording::from_bytes(&read_file(path)?)
}

pub fn write_edf(path: &Path, rec: &EdfRecording) -> Result<()> {
    write_atomic(path, &rec.to_bytes()?)
}

fn put_field(out: &mut Vec<u8>, text: &str, width: usize) {
    let bytes: Vec<u8> = text
        .bytes()
        .map(|b| if b.is_ascii_graphic() || b == b' ' { b } else { b'_' })
        .take(width)
        .collect();
    out.extend_from_slice(&bytes);
    out.extend(std::iter::repeat_n(b' ', width - bytes.len()));
}

fn field<'a>(r: &mut ByteReader<'a>, width: usize, what: &str) -> Result<&'a str> {
    let at = r.offset();
    let raw = r.take(width, what)?;
    std::str::from_utf8(raw)
        .map(str::trim)
        .map_err(|_| Error::format(at, format!("{what} is not ASCII text")))
}

fn number<N: std::str::FromStr>(r: &mut ByteReader, width: usize, what: &str) -> Result<N> {
    let at = r.offset();
    let text = field(r, width, what)?;
    text.parse()
        .map_err(|_| Error::format(at, format!("{what} `{text}` is not a number")))
}

/// Shortest decimal rendering of `v` that fits in `width` characters.
fn format_number(v: f64, width: usize) -> Result<String> {
    if v == v.trunc() && v.abs() < 1e15 {
        let s = format!("{}", v as i64);
        if s.len() <= width {
            return Ok(s);
        }
    }
    for decimals in (0..width).rev() {
        let s = format!("{v:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s.len() <= width {
            return Ok(s);
        }
    }
    Err(Error::data(format!("{v} does not fit a {width}-character EDF field")))
}

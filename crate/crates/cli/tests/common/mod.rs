#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrononet::data::{write_edf, EdfHeader, EdfRecording, EdfSignal};
use chrononet::Prng;

/// Runs the command line in-process; returns (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("chrononet").chain(args.iter().copied());
    let code = chrononet_cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Electrodes of a typical clinical recorder: every TCP electrode plus
/// extras the montage ignores.
pub const ELECTRODES: [&str; 30] = [
    "FP1", "FP2", "F3", "F4", "C3", "C4", "P3", "P4", "O1", "O2", "F7", "F8", "T3", "T4", "T5",
    "T6", "A1", "A2", "FZ", "CZ", "PZ", "T1", "T2", "EKG1", "SP1", "SP2", "LUC", "RLC", "PHOTIC",
    "IBI",
];

/// Writes a `seconds`-long session of 30 referential signals at `rate` Hz:
/// a per-electrode alpha rhythm plus slow drift and white noise, in µV.
pub fn write_session(path: &Path, seconds: usize, rate: usize, seed: u64) {
    let mut prng = Prng::new(seed);
    let n = seconds * rate;
    let signals = ELECTRODES
        .iter()
        .enumerate()
        .map(|(e, name)| {
            let phase = prng.uniform(0.0, std::f64::consts::TAU);
            let amp = 20.0 + 5.0 * e as f64 / 30.0;
            let samples = (0..n)
                .map(|i| {
                    let t = i as f64 / rate as f64;
                    amp * (std::f64::consts::TAU * 10.0 * t + phase).sin()
                        + 8.0 * (std::f64::consts::TAU * 0.3 * t).sin()
                        + 5.0 * prng.normal()
                })
                .collect();
            EdfSignal::new(format!("EEG {name}-REF"), -500.0, 500.0, rate, samples)
        })
        .collect();
    let rec = EdfRecording {
        header: EdfHeader {
            records: seconds,
            record_duration: 1.0,
            ..EdfHeader::default()
        },
        signals,
    };
    write_edf(path, &rec).unwrap();
}

/// The two-session fixture: a 12-minute training session at 250 Hz and a
/// one-minute test session at 500 Hz from another patient. Returns the
/// manifest path.
pub fn two_session_fixture(dir: &Path) -> PathBuf {
    write_session(&dir.join("train_a.edf"), 720, 250, 1);
    write_session(&dir.join("test_b.edf"), 60, 500, 2);
    let manifest = dir.join("manifest.csv");
    std::fs::write(
        &manifest,
        "path,label,patient_id,split\ntrain_a.edf,abnormal,pa,train\ntest_b.edf,normal,pb,test\n",
    )
    .unwrap();
    manifest
}

/// Small synthetic container written by the `synth` command.
pub fn synth(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec![
        "synth",
        "--out",
        path_str(&out),
        "--length",
        "64",
        "--per-class",
        "12",
        "--test-per-class",
        "4",
        "--groups",
        "6",
        "--envelope-period",
        "16",
    ];
    args.extend_from_slice(extra);
    let (code, _, err) = cli(&args);
    assert_eq!(code, 0, "{err}");
    out
}

/// Flags for a model small enough to train in well under a second.
pub const TINY: [&str; 10] = [
    "--preset", "small", "--filters", "2", "--gru-widths", "4,4", "--epochs", "2", "--no-timing", "--batch=8",
];

use std::io::Write;
use std::path::{Path, PathBuf};

use chrononet::data::{
    apply_montage, extract_windows, meta_path, read_edf, resample, stats_path, Dataset, DatasetManifest,
    ManifestEntry, MontageDef, NormStats, Recording, SampleMeta, Split, WindowSpec,
};

use super::required;
use crate::error::{CliError, CliResult, Context};
use crate::output::Outputs;
use crate::PrepareArgs;

/// Windows per split produced by [`prepare`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrepareCounts {
    pub train_sessions: usize,
    pub test_sessions: usize,
    pub train_windows: usize,
    pub test_windows: usize,
}

fn session_path(edf_dir: &Path, entry: &ManifestEntry) -> PathBuf {
    if entry.path.is_absolute() {
        entry.path.clone()
    } else {
        edf_dir.join(&entry.path)
    }
}

fn session_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_session(path: &Path, entry: &ManifestEntry, montage: &MontageDef, rate: f64) -> CliResult<Recording> {
    let at = |stage: &str| format!("{} [{stage}]", path.display());
    let edf = read_edf(path).context(at("read"))?;
    let rec = apply_montage(&edf, montage, &entry.patient_id, &session_id(path)).context(at("montage"))?;
    let channels = rec
        .channels
        .iter()
        .map(|c| resample(c, rec.rate, rate))
        .collect::<chrononet::Result<Vec<_>>>()
        .context(at("resample"))?;
    Recording::new(rec.channel_names, channels, rate, rec.patient_id, rec.session_id).context(at("resample"))
}

/// Reads, derives, resamples and windows every session of `manifest`, then
/// z-scores both splits with statistics of the training windows.
pub fn prepare(
    edf_dir: &Path,
    manifest: &DatasetManifest,
    montage: &MontageDef,
    window: &WindowSpec,
) -> CliResult<(Dataset, NormStats, PrepareCounts)> {
    if manifest.is_empty() {
        return Err(CliError::data("manifest lists no sessions"));
    }
    manifest.check_patient_split()?;
    window.validate()?;
    let mut train = Dataset::new(montage.len(), window.window_samples())?;
    let mut test = train.clone();
    for entry in &manifest.entries {
        let path = session_path(edf_dir, entry);
        let rec = load_session(&path, entry, montage, window.rate)?;
        let windows = extract_windows(&rec, window, entry.split).context(format!("{} [window]", path.display()))?;
        let target = match entry.split {
            Split::Train => &mut train,
            Split::Test => &mut test,
        };
        for (k, w) in windows.iter().enumerate() {
            let meta = SampleMeta::new(&entry.patient_id, format!("{}#{k}", rec.session_id), entry.split);
            target.push(&w.values, entry.label, meta)?;
        }
    }
    if train.is_empty() {
        return Err(CliError::data("no training windows: normalization statistics need the train split"));
    }
    let stats = NormStats::compute(&train)?;
    stats.apply(&mut train)?;
    stats.apply(&mut test)?;
    let counts = PrepareCounts {
        train_sessions: manifest.count(Split::Train),
        test_sessions: manifest.count(Split::Test),
        train_windows: train.len(),
        test_windows: test.len(),
    };
    train.extend(&test)?;
    Ok((train, stats, counts))
}

pub fn run(a: &PrepareArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.run.resolve()?;
    if a.edf_dir.is_some() {
        cfg.edf_dir = a.edf_dir.clone();
    }
    if a.manifest.is_some() {
        cfg.manifest = a.manifest.clone();
    }
    if a.montage.is_some() {
        cfg.montage = a.montage.clone();
    }
    let manifest_path = required(&cfg.manifest, "manifest")?;
    let manifest = DatasetManifest::load(&manifest_path).context(manifest_path.display())?;
    let edf_dir = cfg.edf_dir.clone().unwrap_or_else(|| {
        manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    let montage = match &cfg.montage {
        Some(p) => MontageDef::load(p).context(p.display())?,
        None => MontageDef::default_tcp(),
    };

    let (ds, stats, counts) = prepare(&edf_dir, &manifest, &montage, &cfg.window)?;
    let mut outputs = Outputs::new();
    outputs.track(&a.out);
    outputs.track(meta_path(&a.out));
    ds.export(&a.out)?;
    outputs.write(&stats_path(&a.out), &stats.to_bytes())?;
    let _ = writeln!(
        out,
        "train: {} sessions, {} windows\ntest: {} sessions, {} windows\nwindow: {} channels x {} samples",
        counts.train_sessions,
        counts.train_windows,
        counts.test_sessions,
        counts.test_windows,
        ds.channels(),
        ds.length()
    );
    outputs.commit();
    Ok(())
}

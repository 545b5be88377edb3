//! EEG preparation: EDF ingestion, bipolar montages, resampling, windowing,
//! normalization, manifests, dataset containers and synthetic generators.

mod dataset;
mod edf;
mod manifest;
mod montage;
mod normalize;
mod resample;
mod synthetic;
mod windows;

pub use dataset::{
    meta_path, read_header, Dataset, DatasetHeader, SampleMeta, Split, DATASET_MAGIC,
    DATASET_VERSION,
};
pub use edf::{read_edf, write_edf, EdfHeader, EdfRecording, EdfSignal};
pub use manifest::{parse_label, DatasetManifest, ManifestEntry};
pub use montage::{apply_montage, normalize_label, MontageDef, MontagePair, Recording};
pub use normalize::{stats_path, NormStats, STATS_FLAG};
pub use resample::{lowpass_taps, resample, FIR_TAPS, TARGET_RATE};
pub use synthetic::{
    decode_envelope, decode_motif, generate_synthetic, self_check, SelfCheck, SyntheticSet,
    SyntheticSpec,
};
pub use windows::{extract_windows, Window, WindowSpec};

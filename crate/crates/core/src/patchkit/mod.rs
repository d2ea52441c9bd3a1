//! Patch dataset construction: sliding windows over co-registered scene
//! pairs, the three keep/reject rules, bit-exact sample blobs, the JSONL
//! manifest and spatially blocked evaluation splits.

mod dataset;
mod filter;
mod sample;
mod split;
mod windows;

use std::io;

use thiserror::Error;

pub use dataset::{
    extract_dataset, extract_samples, for_each_sample, load_sample, read_manifest, write_manifest,
    ExtractConfig, ExtractSummary, ManifestRecord, PatchStats, Region, SceneInput, Split,
};
pub use filter::{
    cloud_fraction, filter_patch, merged_cloud, normalize_s2, normalize_s2_plane, visible_landslide_px,
    visible_mask, CloudClass, FilterOutcome, RejectReason, MAX_CLOUD_FRACTION,
};
pub use sample::{
    blob_len, decode_sample, encode_sample, read_sample, write_sample, PatchSample, SampleMeta,
    DEM_BANDS, LSCD_MAGIC, LSCD_VERSION, SPECTRAL_BANDS,
};
pub use split::{split_dataset, SplitSpec};
pub use windows::{assemble_pairs, enumerate_windows, PATCH_SIZE, PATCH_STRIDE};

use crate::geodata::GeoError;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("cloud class {value} at pixel {index} is outside 0..=3")]
    CloudClass { index: usize, value: u8 },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported sample version {0}")]
    Version(u16),
    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("inputs are not co-registered: {0}")]
    Registration(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("inventory {0:?} is not part of the split spec")]
    UnknownInventory(String),
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

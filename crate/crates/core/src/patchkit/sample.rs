use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::{cloud_fraction, visible_landslide_px};
use super::PatchError;
use crate::geodata::GeoTransform;

pub const SPECTRAL_BANDS: usize = 12;
pub const DEM_BANDS: usize = 4;
pub const LSCD_MAGIC: [u8; 4] = *b"LSCD";
pub const LSCD_VERSION: u16 = 1;

const HEADER_LEN: usize = 6;
/// Bytes per pixel of the blob payload: 28 f32 planes and 3 u8 planes.
const BYTES_PER_PIXEL: usize = (2 * SPECTRAL_BANDS + DEM_BANDS) * 4 + 3;

/// Provenance of one patch. Kept in the manifest, not in the blob.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: String,
    pub inventory_id: String,
    pub pre_scene: String,
    pub post_scene: String,
    /// `(col, row)` of the window's top-left pixel in the region grid.
    pub window_origin: (usize, usize),
    pub crs: u32,
    pub transform: Option<GeoTransform>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub augmented: bool,
}

/// One square training unit. Planes are band-major, row-major; spectra are
/// normalized reflectances, `cloud` is the merged pre/post mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub size: usize,
    pub pre: Vec<f32>,
    pub post: Vec<f32>,
    pub dem: Vec<f32>,
    pub gt: Vec<u8>,
    pub cloud: Vec<u8>,
    pub valid: Vec<u8>,
    pub meta: SampleMeta,
}

impl PatchSample {
    /// All-zero sample of the given edge length with everything valid.
    pub fn zeros(size: usize) -> Self {
        let n = size * size;
        Self {
            size,
            pre: vec![0.0; SPECTRAL_BANDS * n],
            post: vec![0.0; SPECTRAL_BANDS * n],
            dem: vec![0.0; DEM_BANDS * n],
            gt: vec![0; n],
            cloud: vec![0; n],
            valid: vec![1; n],
            meta: SampleMeta::default(),
        }
    }

    pub fn pixels(&self) -> usize {
        self.size * self.size
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        let n = self.pixels();
        let checks = [
            ("pre", self.pre.len(), SPECTRAL_BANDS * n),
            ("post", self.post.len(), SPECTRAL_BANDS * n),
            ("dem", self.dem.len(), DEM_BANDS * n),
            ("gt", self.gt.len(), n),
            ("cloud", self.cloud.len(), n),
            ("valid", self.valid.len(), n),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(PatchError::InvalidSample(format!(
                    "{name} holds {got} values, expected {want}"
                )));
            }
        }
        if self.gt.iter().chain(&self.valid).any(|&v| v > 1) {
            return Err(PatchError::InvalidSample("gt/valid must be 0 or 1".into()));
        }
        if let Some(index) = self.cloud.iter().position(|&v| v > 3) {
            return Err(PatchError::CloudClass {
                index,
                value: self.cloud[index],
            });
        }
        Ok(())
    }

    pub fn spectral_band<'a>(planes: &'a [f32], size: usize, band: usize) -> &'a [f32] {
        let n = size * size;
        &planes[band * n..(band + 1) * n]
    }

    pub fn visible_landslide_px(&self) -> u64 {
        visible_landslide_px(&self.gt, &self.cloud, &self.valid)
    }

    pub fn cloud_fraction(&self) -> f64 {
        cloud_fraction(&self.cloud)
    }

    /// Payload equality comparing float planes by bit pattern.
    pub fn bitwise_eq(&self, other: &PatchSample) -> bool {
        let bits = |a: &[f32], b: &[f32]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.size == other.size
            && bits(&self.pre, &other.pre)
            && bits(&self.post, &other.post)
            && bits(&self.dem, &other.dem)
            && self.gt == other.gt
            && self.cloud == other.cloud
            && self.valid == other.valid
    }
}

/// Blob size in bytes for a patch edge length (7,536,646 at 256).
pub fn blob_len(size: usize) -> usize {
    HEADER_LEN + BYTES_PER_PIXEL * size * size
}

pub fn encode_sample(s: &PatchSample) -> Result<Vec<u8>, PatchError> {
    s.validate()?;
    let mut out = Vec::with_capacity(blob_len(s.size));
    out.extend_from_slice(&LSCD_MAGIC);
    out.extend_from_slice(&LSCD_VERSION.to_le_bytes());
    for plane in [&s.pre, &s.post, &s.dem] {
        for v in plane.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&s.gt);
    out.extend_from_slice(&s.cloud);
    out.extend_from_slice(&s.valid);
    debug_assert_eq!(out.len(), blob_len(s.size));
    Ok(out)
}

/// Decodes a blob, inferring the patch edge from the payload length. The
/// returned sample carries default metadata.
pub fn decode_sample(bytes: &[u8]) -> Result<PatchSample, PatchError> {
    if bytes.len() < HEADER_LEN {
        return Err(PatchError::SizeMismatch {
            expected: blob_len(super::PATCH_SIZE),
            actual: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if found != LSCD_MAGIC {
        return Err(PatchError::BadMagic {
            expected: LSCD_MAGIC,
            found,
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != LSCD_VERSION {
        return Err(PatchError::Version(version));
    }
    let payload = bytes.len() - HEADER_LEN;
    let pixels = payload / BYTES_PER_PIXEL;
    let size = (pixels as f64).sqrt().round() as usize;
    if payload % BYTES_PER_PIXEL != 0 || size * size != pixels || size == 0 {
        // Report against the nearest complete blob at or above what is present.
        let mut want = size.max(1);
        while blob_len(want) < bytes.len() {
            want += 1;
        }
        return Err(PatchError::SizeMismatch {
            expected: blob_len(want),
            actual: bytes.len(),
        });
    }
    let n = pixels;
    let mut at = HEADER_LEN;
    let mut floats = |count: usize| -> Vec<f32> {
        let v = bytes[at..at + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        at += 4 * count;
        v
    };
    let pre = floats(SPECTRAL_BANDS * n);
    let post = floats(SPECTRAL_BANDS * n);
    let dem = floats(DEM_BANDS * n);
    let tail = &bytes[bytes.len() - 3 * n..];
    let sample = PatchSample {
        size,
        pre,
        post,
        dem,
        gt: tail[..n].to_vec(),
        cloud: tail[n..2 * n].to_vec(),
        valid: tail[2 * n..].to_vec(),
        meta: SampleMeta::default(),
    };
    sample.validate()?;
    Ok(sample)
}

pub fn write_sample(s: &PatchSample, path: &Path) -> Result<(), PatchError> {
    fs::write(path, encode_sample(s)?)?;
    Ok(())
}

pub fn read_sample(path: &Path) -> Result<PatchSample, PatchError> {
    decode_sample(&fs::read(path)?)
}

//! Synthetic change-detection patches where only terrain separates real
//! landslides from look-alike changes.
//!
//! Each patch is split by a straight line into a steep slope and a gentle
//! slope. Change blobs with one shared spectral signature are painted on
//! both sides, but only the blobs on the steep side are labelled. Spectra
//! carry no terrain information, so a model without the DEM cannot tell the
//! two kinds apart.

use std::fs;
use std::path::Path;

use landslide_core::geodata::{GeoTransform, RasterGrid};
use landslide_core::patchkit::{
    blob_len, write_manifest, write_sample, ManifestRecord, PatchSample, SampleMeta, Split, DEM_BANDS,
    SPECTRAL_BANDS,
};
use landslide_core::terrain::build_dem_stack;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ModelError;

/// Post-minus-pre reflectance shift of a fresh scar (bright soil, lost
/// vegetation).
const CHANGE_SIGNATURE: [f32; SPECTRAL_BANDS] = [
    0.10, 0.12, 0.14, 0.15, 0.10, -0.06, -0.12, -0.14, -0.12, 0.0, 0.16, 0.14,
];
const CELL_M: f64 = 10.0;
const EDGE_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub size: usize,
    pub steep_deg: (f64, f64),
    pub gentle_deg: (f64, f64),
    pub slope_threshold_deg: f64,
    /// Blobs per class, inclusive range.
    pub blobs: (usize, usize),
    pub cloud_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 32,
            steep_deg: (35.0, 50.0),
            gentle_deg: (0.0, 10.0),
            slope_threshold_deg: 25.0,
            blobs: (1, 3),
            cloud_prob: 0.25,
        }
    }
}

struct Layout {
    /// Split line runs along rows (`true`) or columns.
    vertical: bool,
    split: f64,
    steep_low: bool,
}

impl Layout {
    /// Coordinate across the split line.
    fn across(&self, r: f64, c: f64) -> f64 {
        if self.vertical {
            c
        } else {
            r
        }
    }

    fn is_steep(&self, u: f64) -> bool {
        (u < self.split) == self.steep_low
    }
}

fn elevation(layout: &Layout, n: usize, steep: f64, gentle: f64, base: f64, sign: f64) -> Vec<f32> {
    let (ts, tg) = (steep.to_radians().tan() * CELL_M, gentle.to_radians().tan() * CELL_M);
    let mut z = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            // Grid has a one-cell apron so the cropped patch avoids edge effects.
            let u = layout.across(r as f64 - 1.0, c as f64 - 1.0);
            let d = u - layout.split;
            let h = if layout.is_steep(u) {
                ts * d.abs()
            } else {
                tg * d.abs()
            };
            z.push((base + sign * h) as f32);
        }
    }
    z
}

fn paint_disc(size: usize, cr: f64, cc: f64, radius: f64, mut f: impl FnMut(usize)) {
    for r in 0..size {
        for c in 0..size {
            let (dr, dc) = (r as f64 - cr, c as f64 - cc);
            if dr * dr + dc * dc <= radius * radius {
                f(r * size + c);
            }
        }
    }
}

/// Patch `index` of the stream `seed`; deterministic in both.
pub fn synth_sample(cfg: &SynthConfig, seed: u64, index: usize) -> Result<PatchSample, ModelError> {
    let s = cfg.size;
    let n = s * s;
    let sf = s as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);

    let layout = Layout {
        vertical: rng.random_bool(0.5),
        split: rng.random_range(sf / 3.0..2.0 * sf / 3.0),
        steep_low: rng.random_bool(0.5),
    };
    let steep = rng.random_range(cfg.steep_deg.0..cfg.steep_deg.1);
    let gentle = rng.random_range(cfg.gentle_deg.0..cfg.gentle_deg.1);
    let base = rng.random_range(300.0..2500.0);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let apron = s + 2;
    let z = elevation(&layout, apron, steep, gentle, base, sign);
    let t = GeoTransform::new(0.0, apron as f64 * CELL_M, CELL_M, CELL_M, 32618)
        .map_err(|e| ModelError::Config(e.to_string()))?;
    let grid = RasterGrid::from_f32(apron, apron, z, t, "elevation").map_err(|e| ModelError::Config(e.to_string()))?;
    let stack = build_dem_stack(&grid).map_err(|e| ModelError::Config(e.to_string()))?;
    let mut dem = Vec::with_capacity(DEM_BANDS * n);
    for b in 0..DEM_BANDS {
        let plane = stack.band(b);
        for r in 1..=s {
            dem.extend_from_slice(&plane[r * apron + 1..r * apron + 1 + s]);
        }
    }
    let slope_deg = |i: usize| f64::from(dem[n + i]) * 90.0;

    let mut pre = Vec::with_capacity(SPECTRAL_BANDS * n);
    let mut post = Vec::with_capacity(SPECTRAL_BANDS * n);
    for _ in 0..SPECTRAL_BANDS {
        let level: f32 = rng.random_range(0.05..0.35);
        let (op, oq): (f32, f32) = (rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
        for _ in 0..n {
            let ground = level + rng.random_range(-0.03..0.03);
            pre.push(ground + op + rng.random_range(-0.01..0.01));
            post.push(ground + oq + rng.random_range(-0.01..0.01));
        }
    }

    let mut gt = vec![0u8; n];
    let r_lo = sf / 16.0;
    let r_hi = sf / 9.0;
    for labelled in [true, false] {
        let count = rng.random_range(cfg.blobs.0..=cfg.blobs.1);
        for _ in 0..count {
            let radius = rng.random_range(r_lo..r_hi);
            let reach = radius + EDGE_MARGIN;
            let (lo, hi) = if labelled == layout.steep_low {
                (reach, layout.split - reach)
            } else {
                (layout.split + reach, sf - 1.0 - reach)
            };
            let (lo, hi) = (lo.max(reach), hi.min(sf - 1.0 - reach));
            if lo >= hi {
                continue;
            }
            let u = rng.random_range(lo..hi);
            let v = rng.random_range(reach..sf - 1.0 - reach);
            let (cr, cc) = if layout.vertical { (v, u) } else { (u, v) };
            let strength: f32 = rng.random_range(0.8..1.2);
            paint_disc(s, cr, cc, radius, |i| {
                for (b, d) in CHANGE_SIGNATURE.iter().enumerate() {
                    post[b * n + i] += strength * d;
                }
                if labelled && slope_deg(i) > cfg.slope_threshold_deg {
                    gt[i] = 1;
                }
            });
        }
    }

    let mut cloud = vec![0u8; n];
    if rng.random_bool(cfg.cloud_prob) {
        let (cr, cc) = (rng.random_range(0.0..sf), rng.random_range(0.0..sf));
        paint_disc(s, cr, cc, sf / 8.0, |i| {
            cloud[i] = 1;
            for b in 0..SPECTRAL_BANDS {
                post[b * n + i] = 0.7;
            }
        });
    }
    for v in pre.iter_mut().chain(post.iter_mut()) {
        *v = v.clamp(0.0, 1.0);
    }

    Ok(PatchSample {
        size: s,
        pre,
        post,
        dem,
        gt,
        cloud,
        valid: vec![1; n],
        meta: SampleMeta {
            sample_id: format!("syn{seed}_{index:05}"),
            inventory_id: "synthetic".into(),
            pre_scene: format!("syn{seed}_pre"),
            post_scene: format!("syn{seed}_post"),
            window_origin: (index * s, 0),
            crs: 32618,
            ..SampleMeta::default()
        },
    })
}

pub fn synth_set(
    cfg: &SynthConfig,
    seed: u64,
    range: std::ops::Range<usize>,
) -> Result<Vec<PatchSample>, ModelError> {
    range.map(|i| synth_sample(cfg, seed, i)).collect()
}

/// Writes `train + val + test` synthetic samples and a manifest to `dir`.
pub fn write_synthetic_dataset(
    dir: &Path,
    cfg: &SynthConfig,
    seed: u64,
    counts: [usize; 3],
) -> Result<Vec<ManifestRecord>, ModelError> {
    fs::create_dir_all(dir.join("samples"))?;
    let splits = [Split::Train, Split::Val, Split::Test];
    let mut records = Vec::new();
    let mut index = 0;
    for (split, &count) in splits.into_iter().zip(&counts) {
        for _ in 0..count {
            let s = synth_sample(cfg, seed, index)?;
            index += 1;
            let blob_path = format!("samples/{}.lscd", s.meta.sample_id);
            write_sample(&s, &dir.join(&blob_path))?;
            debug_assert_eq!(fs::metadata(dir.join(&blob_path))?.len() as usize, blob_len(s.size));
            records.push(ManifestRecord {
                cloud_fraction: s.cloud_fraction(),
                visible_landslide_px: s.visible_landslide_px(),
                meta: s.meta,
                split,
                blob_path,
            });
        }
    }
    write_manifest(&dir.join("manifest.jsonl"), &records)?;
    Ok(records)
}

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::filter::{filter_patch, merged_cloud, normalize_s2, FilterOutcome, RejectReason};
use super::sample::{write_sample, PatchSample, SampleMeta, DEM_BANDS, SPECTRAL_BANDS};
use super::windows::{enumerate_windows, PATCH_SIZE, PATCH_STRIDE};
use super::PatchError;
use crate::geodata::{DataType, RasterData, RasterGrid};
use crate::terrain::DemStack;

/// One acquisition: 12 raw (DN) spectral bands plus its 4-class cloud mask.
#[derive(Debug, Clone)]
pub struct SceneInput {
    pub scene_id: String,
    pub spectra: RasterGrid,
    pub cloud: RasterGrid,
}

/// Everything extracted for one inventory, all on one grid.
#[derive(Debug, Clone)]
pub struct Region {
    pub inventory_id: String,
    pub scenes: Vec<SceneInput>,
    pub dem: DemStack,
    pub gt: RasterGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub patch_size: usize,
    pub stride: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            patch_size: PATCH_SIZE,
            stride: PATCH_STRIDE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchStats {
    pub cloud_fraction: f64,
    pub visible_landslide_px: u64,
}

/// Window tallies of one extraction run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtractSummary {
    pub windows: usize,
    pub kept: usize,
    pub rejected_nodata: usize,
    pub rejected_cloud: usize,
    pub rejected_no_landslide: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Unassigned,
    Train,
    Val,
    Test,
    ExcludedEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(flatten)]
    pub meta: SampleMeta,
    pub cloud_fraction: f64,
    pub visible_landslide_px: u64,
    #[serde(default)]
    pub split: Split,
    /// Relative to the dataset directory.
    pub blob_path: String,
}

fn check_registration(region: &Region) -> Result<(), PatchError> {
    let reference = region.dem.grid();
    let (rows, cols) = (reference.rows(), reference.cols());
    let t = reference.transform();
    let check = |name: &str, g: &RasterGrid, bands: usize, dtype: Option<DataType>| {
        if g.rows() != rows || g.cols() != cols {
            return Err(PatchError::Registration(format!(
                "{name} is {}x{}, DEM is {rows}x{cols}",
                g.rows(),
                g.cols()
            )));
        }
        if g.transform().crs_code != t.crs_code || !g.transform().approx_eq(t, 1e-6) {
            return Err(PatchError::Registration(format!(
                "{name} transform {:?} differs from DEM {:?}",
                g.transform(),
                t
            )));
        }
        if g.bands() != bands {
            return Err(PatchError::Registration(format!(
                "{name} has {} bands, expected {bands}",
                g.bands()
            )));
        }
        if let Some(d) = dtype {
            if g.dtype() != d {
                return Err(PatchError::Registration(format!("{name} must be {}", d.as_str())));
            }
        }
        Ok(())
    };
    check("ground truth", &region.gt, 1, Some(DataType::U8))?;
    for s in &region.scenes {
        check(&format!("scene {}", s.scene_id), &s.spectra, SPECTRAL_BANDS, None)?;
        check(&format!("cloud mask of {}", s.scene_id), &s.cloud, 1, Some(DataType::U8))?;
    }
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn sample_id(inventory: &str, pre: &str, post: &str, col: usize, row: usize) -> String {
    format!("{}__{}__{}__c{col}_r{row}", sanitize(inventory), sanitize(pre), sanitize(post))
}

struct PreparedScene {
    spectra: Vec<f32>,
    valid: Vec<u8>,
}

fn prepare_scene(s: &SceneInput) -> PreparedScene {
    let mut valid = s.spectra.validity_mask();
    let n = s.spectra.band_len();
    let spectra: Vec<f32> = match s.spectra.data() {
        RasterData::F32(v) => {
            for (i, x) in v.iter().enumerate() {
                if !x.is_finite() {
                    valid[i % n] = 0;
                }
            }
            v.iter().map(|&x| if x.is_finite() { normalize_s2(x) } else { 0.0 }).collect()
        }
        RasterData::U8(v) => v.iter().map(|&x| normalize_s2(f32::from(x))).collect(),
    };
    PreparedScene { spectra, valid }
}

fn crop<T: Copy>(planes: &[T], bands: usize, cols: usize, rows: usize, c0: usize, r0: usize, size: usize) -> Vec<T> {
    let n = rows * cols;
    let mut out = Vec::with_capacity(bands * size * size);
    for b in 0..bands {
        for r in r0..r0 + size {
            let start = b * n + r * cols + c0;
            out.extend_from_slice(&planes[start..start + size]);
        }
    }
    out
}

/// Walks every `(pair, window)` in deterministic order (pairs as given,
/// windows row-major), applies the keep rules and hands each kept sample to
/// `sink`. `pairs` index into `region.scenes` as `(pre, post)`.
pub fn for_each_sample<F>(
    region: &Region,
    pairs: &[(usize, usize)],
    cfg: &ExtractConfig,
    mut sink: F,
) -> Result<ExtractSummary, PatchError>
where
    F: FnMut(PatchSample, PatchStats) -> Result<(), PatchError>,
{
    check_registration(region)?;
    let dem_grid = region.dem.grid();
    let (rows, cols) = (dem_grid.rows(), dem_grid.cols());
    let dem_planes = match dem_grid.data() {
        RasterData::F32(v) => v,
        RasterData::U8(_) => unreachable!("DemStack is always f32"),
    };
    let gt_plane = region.gt.band_u8(0).expect("checked u8");
    let windows = enumerate_windows(rows, cols, cfg.patch_size, cfg.stride);
    let mut summary = ExtractSummary::default();
    let size = cfg.patch_size;
    for &(pi, qi) in pairs {
        let (pre_in, post_in) = match (region.scenes.get(pi), region.scenes.get(qi)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(PatchError::Registration(format!(
                    "pair ({pi},{qi}) out of range for {} scenes",
                    region.scenes.len()
                )))
            }
        };
        let pre = prepare_scene(pre_in);
        let post = prepare_scene(post_in);
        let cloud = merged_cloud(
            pre_in.cloud.band_u8(0).expect("checked u8"),
            post_in.cloud.band_u8(0).expect("checked u8"),
        )?;
        let valid: Vec<u8> = pre.valid.iter().zip(&post.valid).map(|(a, b)| a & b).collect();
        for &(c0, r0) in &windows {
            summary.windows += 1;
            let w_gt = crop(gt_plane, 1, cols, rows, c0, r0, size);
            let w_cloud = crop(&cloud, 1, cols, rows, c0, r0, size);
            let w_valid = crop(&valid, 1, cols, rows, c0, r0, size);
            match filter_patch(&w_gt, &w_cloud, &w_valid) {
                FilterOutcome::Reject(RejectReason::Nodata) => summary.rejected_nodata += 1,
                FilterOutcome::Reject(RejectReason::CloudCover) => summary.rejected_cloud += 1,
                FilterOutcome::Reject(RejectReason::NoVisibleLandslide) => {
                    summary.rejected_no_landslide += 1
                }
                FilterOutcome::Keep => {
                    summary.kept += 1;
                    let meta = SampleMeta {
                        sample_id: sample_id(&region.inventory_id, &pre_in.scene_id, &post_in.scene_id, c0, r0),
                        inventory_id: region.inventory_id.clone(),
                        pre_scene: pre_in.scene_id.clone(),
                        post_scene: post_in.scene_id.clone(),
                        window_origin: (c0, r0),
                        crs: dem_grid.transform().crs_code,
                        transform: Some(dem_grid.transform().window(c0, r0)),
                        augmented: false,
                    };
                    let sample = PatchSample {
                        size,
                        pre: crop(&pre.spectra, SPECTRAL_BANDS, cols, rows, c0, r0, size),
                        post: crop(&post.spectra, SPECTRAL_BANDS, cols, rows, c0, r0, size),
                        dem: crop(dem_planes, DEM_BANDS, cols, rows, c0, r0, size),
                        gt: w_gt,
                        cloud: w_cloud,
                        valid: w_valid,
                        meta,
                    };
                    let stats = PatchStats {
                        cloud_fraction: sample.cloud_fraction(),
                        visible_landslide_px: sample.visible_landslide_px(),
                    };
                    sink(sample, stats)?;
                }
            }
        }
    }
    log::debug!("{}: {summary:?}", region.inventory_id);
    Ok(summary)
}

/// In-memory variant of [`extract_dataset`].
pub fn extract_samples(
    region: &Region,
    pairs: &[(usize, usize)],
    cfg: &ExtractConfig,
) -> Result<Vec<(PatchSample, PatchStats)>, PatchError> {
    let mut out = Vec::new();
    for_each_sample(region, pairs, cfg, |s, st| {
        out.push((s, st));
        Ok(())
    })?;
    Ok(out)
}

/// Writes kept samples to `<out_dir>/samples/<id>.lscd` and returns their
/// manifest records (split left unassigned) along with the window tallies.
pub fn extract_dataset(
    region: &Region,
    pairs: &[(usize, usize)],
    cfg: &ExtractConfig,
    out_dir: &Path,
) -> Result<(Vec<ManifestRecord>, ExtractSummary), PatchError> {
    let samples_dir = out_dir.join("samples");
    fs::create_dir_all(&samples_dir)?;
    let mut records = Vec::new();
    let summary = for_each_sample(region, pairs, cfg, |s, st| {
        let blob_path = format!("samples/{}.lscd", s.meta.sample_id);
        write_sample(&s, &out_dir.join(&blob_path))?;
        records.push(ManifestRecord {
            meta: s.meta,
            cloud_fraction: st.cloud_fraction,
            visible_landslide_px: st.visible_landslide_px,
            split: Split::Unassigned,
            blob_path,
        });
        Ok(())
    })?;
    Ok((records, summary))
}

/// Reads a sample blob and attaches the record's metadata.
pub fn load_sample(dataset_dir: &Path, record: &ManifestRecord) -> Result<PatchSample, PatchError> {
    let mut s = super::read_sample(&dataset_dir.join(&record.blob_path))?;
    s.meta = record.meta.clone();
    Ok(s)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), PatchError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| PatchError::Manifest {
            line: 0,
            message: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a JSONL manifest, rejecting duplicate sample ids and records above
/// the cloud-cover limit.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, PatchError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PatchError::Manifest { line: i + 1, message };
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if !seen.insert(rec.meta.sample_id.clone()) {
            return Err(bad(format!("duplicate sample id {}", rec.meta.sample_id)));
        }
        if rec.cloud_fraction > super::MAX_CLOUD_FRACTION {
            return Err(bad(format!("cloud fraction {} above limit", rec.cloud_fraction)));
        }
        out.push(rec);
    }
    Ok(out)
}

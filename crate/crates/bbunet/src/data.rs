use std::path::{Path, PathBuf};

use landslide_core::patchkit::{load_sample, visible_mask, ManifestRecord, PatchSample, Split};
use landslide_tensor::{Real, Tensor};

use crate::ModelError;

/// Indexed access to patch samples.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn sample_id(&self, i: usize) -> &str;
    fn load(&self, i: usize) -> Result<PatchSample, ModelError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct MemorySource(pub Vec<PatchSample>);

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn sample_id(&self, i: usize) -> &str {
        &self.0[i].meta.sample_id
    }

    fn load(&self, i: usize) -> Result<PatchSample, ModelError> {
        Ok(self.0[i].clone())
    }
}

/// Blobs of one split of an on-disk dataset, in manifest order.
pub struct DiskSource {
    dir: PathBuf,
    records: Vec<ManifestRecord>,
}

impl DiskSource {
    pub fn new(dir: &Path, records: Vec<ManifestRecord>) -> Self {
        Self {
            dir: dir.to_path_buf(),
            records,
        }
    }

    pub fn split(dir: &Path, records: &[ManifestRecord], split: Split) -> Self {
        Self::new(dir, records.iter().filter(|r| r.split == split).cloned().collect())
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }
}

impl SampleSource for DiskSource {
    fn len(&self) -> usize {
        self.records.len()
    }

    fn sample_id(&self, i: usize) -> &str {
        &self.records[i].meta.sample_id
    }

    fn load(&self, i: usize) -> Result<PatchSample, ModelError> {
        Ok(load_sample(&self.dir, &self.records[i])?)
    }
}

/// Stacked model inputs plus flattened labels and visibility.
pub struct Batch<T: Real> {
    pub ids: Vec<String>,
    pub pre: Tensor<T>,
    pub post: Tensor<T>,
    pub dem: Tensor<T>,
    pub gt: Vec<u8>,
    pub mask: Vec<u8>,
}

fn cast<T: Real>(v: &[f32]) -> impl Iterator<Item = T> + '_ {
    v.iter().map(|&x| T::of(f64::from(x)))
}

pub fn collate<T: Real>(samples: &[PatchSample]) -> Result<Batch<T>, ModelError> {
    let first = samples.first().ok_or(ModelError::EmptyDataset("batch"))?;
    let s = first.size;
    if let Some(bad) = samples.iter().find(|x| x.size != s) {
        return Err(ModelError::Shape(format!(
            "sample {} is {}px, batch is {s}px",
            bad.meta.sample_id, bad.size
        )));
    }
    let n = samples.len();
    let (mut pre, mut post, mut dem) = (Vec::new(), Vec::new(), Vec::new());
    let (mut gt, mut mask) = (Vec::new(), Vec::new());
    for x in samples {
        x.validate()?;
        pre.extend(cast::<T>(&x.pre));
        post.extend(cast::<T>(&x.post));
        dem.extend(cast::<T>(&x.dem));
        gt.extend_from_slice(&x.gt);
        mask.extend(visible_mask(&x.valid, &x.cloud));
    }
    let bands = pre.len() / (n * s * s);
    Ok(Batch {
        ids: samples.iter().map(|x| x.meta.sample_id.clone()).collect(),
        pre: Tensor::from_vec(&[n, bands, s, s], pre),
        post: Tensor::from_vec(&[n, bands, s, s], post),
        dem: Tensor::from_vec(&[n, dem.len() / (n * s * s), s, s], dem),
        gt,
        mask,
    })
}

//! Training-time augmentation: the eight square symmetries applied jointly to
//! every plane of a sample, brightness/contrast jitter and band-wise
//! histogram matching applied to spectra only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::patchkit::{PatchSample, SPECTRAL_BANDS};
use crate::util::{hash_str, splitmix64};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("reference band has no valid pixels")]
    EmptyReference,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// Element of the dihedral group of the square, stored as
/// `rot90^rotations ∘ hflip^flip` (flip applied first). `rot90` turns the
/// image counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct D4 {
    rotations: u8,
    flip: bool,
}

impl D4 {
    pub const IDENTITY: D4 = D4::new(0, false);
    pub const ROT90: D4 = D4::new(1, false);
    pub const ROT180: D4 = D4::new(2, false);
    pub const ROT270: D4 = D4::new(3, false);
    pub const HFLIP: D4 = D4::new(0, true);
    pub const TRANSPOSE: D4 = D4::new(1, true);
    pub const VFLIP: D4 = D4::new(2, true);
    pub const ANTI_TRANSPOSE: D4 = D4::new(3, true);

    pub const ALL: [D4; 8] = [
        Self::IDENTITY,
        Self::ROT90,
        Self::ROT180,
        Self::ROT270,
        Self::HFLIP,
        Self::TRANSPOSE,
        Self::VFLIP,
        Self::ANTI_TRANSPOSE,
    ];

    pub const fn new(rotations: u8, flip: bool) -> Self {
        D4 {
            rotations: rotations % 4,
            flip,
        }
    }

    pub fn rotation_deg(deg: u32) -> Option<Self> {
        match deg {
            0 => Some(Self::IDENTITY),
            90 => Some(Self::ROT90),
            180 => Some(Self::ROT180),
            270 => Some(Self::ROT270),
            _ => None,
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(self, other: D4) -> D4 {
        // H R^k = R^-k H
        let k = if self.flip {
            self.rotations as i32 - other.rotations as i32
        } else {
            self.rotations as i32 + other.rotations as i32
        };
        D4::new(k.rem_euclid(4) as u8, self.flip ^ other.flip)
    }

    pub fn inverse(self) -> D4 {
        if self.flip {
            self
        } else {
            D4::new((4 - self.rotations) % 4, false)
        }
    }

    /// Source pixel `(row, col)` that lands on output `(r, c)` in an `n x n` plane.
    #[inline]
    pub fn source_index(self, r: usize, c: usize, n: usize) -> (usize, usize) {
        let m = n - 1;
        // Undo the rotation, then the flip.
        let (r, c) = match self.rotations {
            0 => (r, c),
            1 => (c, m - r),
            2 => (m - r, m - c),
            _ => (m - c, r),
        };
        if self.flip {
            (r, m - c)
        } else {
            (r, c)
        }
    }

    /// Applies the transform to each `n x n` plane of a band-major buffer.
    pub fn apply_planes<T: Copy>(self, planes: &[T], n: usize) -> Vec<T> {
        if self == Self::IDENTITY {
            return planes.to_vec();
        }
        let len = n * n;
        assert_eq!(planes.len() % len, 0, "buffer is not a stack of {n}x{n} planes");
        let mut out = Vec::with_capacity(planes.len());
        for plane in planes.chunks_exact(len) {
            for r in 0..n {
                for c in 0..n {
                    let (sr, sc) = self.source_index(r, c, n);
                    out.push(plane[sr * n + sc]);
                }
            }
        }
        out
    }
}

/// Same symmetry on every plane; metadata is kept and flagged as augmented.
pub fn geometric_transform(sample: &PatchSample, g: D4) -> PatchSample {
    let n = sample.size;
    let mut meta = sample.meta.clone();
    meta.augmented |= g != D4::IDENTITY;
    PatchSample {
        size: n,
        pre: g.apply_planes(&sample.pre, n),
        post: g.apply_planes(&sample.post, n),
        dem: g.apply_planes(&sample.dem, n),
        gt: g.apply_planes(&sample.gt, n),
        cloud: g.apply_planes(&sample.cloud, n),
        valid: g.apply_planes(&sample.valid, n),
        meta,
    }
}

/// `clamp(k * (x - m) + m + delta, 0, 1)` per band, where `m` is the band's
/// mean over valid pixels (over all pixels if none is valid).
pub fn photometric_jitter(spectra: &[f32], valid: &[u8], delta: f32, k: f32) -> Vec<f32> {
    let n = valid.len();
    assert!(n > 0 && spectra.len() % n == 0, "spectra/valid size mismatch");
    let mut out = Vec::with_capacity(spectra.len());
    for band in spectra.chunks_exact(n) {
        let (sum, count) = band
            .iter()
            .zip(valid)
            .filter(|(_, &v)| v == 1)
            .fold((0.0f64, 0usize), |(s, c), (&x, _)| (s + f64::from(x), c + 1));
        let m = if count > 0 {
            (sum / count as f64) as f32
        } else {
            (band.iter().map(|&x| f64::from(x)).sum::<f64>() / n as f64) as f32
        };
        out.extend(band.iter().map(|&x| (k * (x - m) + m + delta).clamp(0.0, 1.0)));
    }
    out
}

#[inline]
fn bin_of(x: f32, bins: usize) -> usize {
    ((x.clamp(0.0, 1.0) * bins as f32) as usize).min(bins - 1)
}

/// Maps `src` onto the distribution of `reference`.
///
/// Both bands are histogrammed on `bins` uniform bins over `[0, 1]` using
/// only pixels whose mask is 1 (`None` means all valid). Both CDFs are
/// piecewise linear inside each occupied bin, between the smallest and
/// largest value observed there; a bin holding a single distinct value puts
/// its pixels at the bin's mid-rank, so a constant source lands on the
/// reference median. Outputs never leave the reference range and source rank
/// order is preserved. Invalid source pixels are copied unchanged.
pub fn histogram_match(
    src: &[f32],
    src_valid: Option<&[u8]>,
    reference: &[f32],
    ref_valid: Option<&[u8]>,
    bins: usize,
) -> Result<Vec<f32>, AugmentError> {
    assert!(bins >= 2, "need at least two bins");
    let is_valid = |mask: Option<&[u8]>, i: usize| mask.is_none_or(|m| m[i] == 1);

    let mut ref_count = vec![0u64; bins];
    let mut ref_lo = vec![f32::INFINITY; bins];
    let mut ref_hi = vec![f32::NEG_INFINITY; bins];
    for (i, &x) in reference.iter().enumerate() {
        if is_valid(ref_valid, i) {
            let v = x.clamp(0.0, 1.0);
            let b = bin_of(v, bins);
            ref_count[b] += 1;
            ref_lo[b] = ref_lo[b].min(v);
            ref_hi[b] = ref_hi[b].max(v);
        }
    }
    let ref_total: u64 = ref_count.iter().sum();
    if ref_total == 0 {
        return Err(AugmentError::EmptyReference);
    }
    // Cumulative fraction of the reference strictly below each bin.
    let mut ref_cdf = Vec::with_capacity(bins + 1);
    let mut acc = 0u64;
    ref_cdf.push(0.0f64);
    for &c in &ref_count {
        acc += c;
        ref_cdf.push(acc as f64 / ref_total as f64);
    }
    let quantile = |u: f64| -> f32 {
        // First occupied bin whose upper cumulative level reaches u.
        let mut b = ref_cdf[1..].partition_point(|&c| c < u).min(bins - 1);
        while ref_count[b] == 0 && b + 1 < bins {
            b += 1;
        }
        while ref_count[b] == 0 {
            b -= 1;
        }
        let t = ((u - ref_cdf[b]) / (ref_cdf[b + 1] - ref_cdf[b])).clamp(0.0, 1.0);
        ref_lo[b] + (t as f32) * (ref_hi[b] - ref_lo[b])
    };

    let mut src_count = vec![0u64; bins];
    let mut src_lo = vec![f32::INFINITY; bins];
    let mut src_hi = vec![f32::NEG_INFINITY; bins];
    for (i, &x) in src.iter().enumerate() {
        if is_valid(src_valid, i) {
            let v = x.clamp(0.0, 1.0);
            let b = bin_of(v, bins);
            src_count[b] += 1;
            src_lo[b] = src_lo[b].min(v);
            src_hi[b] = src_hi[b].max(v);
        }
    }
    let src_total: u64 = src_count.iter().sum();
    if src_total == 0 {
        return Ok(src.to_vec());
    }
    let mut src_below = vec![0u64; bins];
    let mut acc = 0u64;
    for b in 0..bins {
        src_below[b] = acc;
        acc += src_count[b];
    }
    Ok(src
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if !is_valid(src_valid, i) {
                return x;
            }
            let v = x.clamp(0.0, 1.0);
            let b = bin_of(v, bins);
            let span = src_hi[b] - src_lo[b];
            let frac = if span > 0.0 {
                f64::from((v - src_lo[b]) / span)
            } else {
                0.5
            };
            // Hazen positions: the bin's extremes sit half a pixel inside its
            // cumulative range, so a level never lands on a bin boundary.
            let count = src_count[b] as f64;
            let u = (src_below[b] as f64 + 0.5 + frac * (count - 1.0)) / src_total as f64;
            quantile(u).clamp(0.0, 1.0)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    pub p_hflip: f64,
    pub p_vflip: f64,
    /// Allowed rotation angles in degrees, each a multiple of 90.
    pub rot_choices: Vec<u32>,
    pub brightness_delta: f32,
    pub contrast_range: [f32; 2],
    pub p_histmatch: f64,
    pub hist_bins: usize,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            p_hflip: 0.5,
            p_vflip: 0.5,
            rot_choices: vec![0, 90, 180, 270],
            brightness_delta: 0.1,
            contrast_range: [0.8, 1.25],
            p_histmatch: 0.3,
            hist_bins: 1024,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    /// A policy that leaves every sample untouched.
    pub fn identity() -> Self {
        Self {
            p_hflip: 0.0,
            p_vflip: 0.0,
            rot_choices: vec![0],
            brightness_delta: 0.0,
            contrast_range: [1.0, 1.0],
            p_histmatch: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidPolicy(m));
        for (name, p) in [
            ("p_hflip", self.p_hflip),
            ("p_vflip", self.p_vflip),
            ("p_histmatch", self.p_histmatch),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0,1]"));
            }
        }
        if self.rot_choices.is_empty() {
            return bad("rot_choices is empty".into());
        }
        if let Some(d) = self.rot_choices.iter().find(|&&d| D4::rotation_deg(d).is_none()) {
            return bad(format!("rotation {d} is not one of 0/90/180/270"));
        }
        let [lo, hi] = self.contrast_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("contrast_range [{lo}, {hi}] must be positive and ordered"));
        }
        if !(self.brightness_delta >= 0.0) {
            return bad("brightness_delta must be >= 0".into());
        }
        if self.hist_bins < 2 {
            return bad("hist_bins must be >= 2".into());
        }
        Ok(())
    }
}

/// RNG stream for one sample in one epoch, independent of visiting order.
pub fn augment_rng(seed: u64, sample_id: &str, epoch: u64) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(hash_str(sample_id) ^ splitmix64(epoch)));
    ChaCha8Rng::seed_from_u64(key)
}

/// Spectra used as the histogram-matching target: a band-major stack of
/// `SPECTRAL_BANDS` planes and its validity mask.
#[derive(Debug, Clone, Copy)]
pub struct HistReference<'a> {
    pub spectra: &'a [f32],
    pub valid: &'a [u8],
}

/// Parameters drawn for one application of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub g: D4,
    /// `(delta, k)` for the pre and the post image.
    pub jitter: [(f32, f32); 2],
    /// Index (0 pre, 1 post) of the image to histogram-match, if any.
    pub histmatch: Option<usize>,
}

impl AugmentDraw {
    pub fn draw<R: Rng>(policy: &AugmentPolicy, rng: &mut R) -> Self {
        let mut g = D4::IDENTITY;
        if rng.random_bool(policy.p_hflip) {
            g = D4::HFLIP;
        }
        if rng.random_bool(policy.p_vflip) {
            g = D4::VFLIP.compose(g);
        }
        let deg = policy.rot_choices[rng.random_range(0..policy.rot_choices.len())];
        g = D4::rotation_deg(deg).expect("validated").compose(g);
        let mut jitter = [(0.0, 1.0); 2];
        for j in &mut jitter {
            let d = policy.brightness_delta;
            let [lo, hi] = policy.contrast_range;
            let delta = if d > 0.0 { rng.random_range(-d..=d) } else { 0.0 };
            let k = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            *j = (delta, k);
        }
        let histmatch = if rng.random_bool(policy.p_histmatch) {
            Some(rng.random_range(0..2))
        } else {
            None
        };
        AugmentDraw { g, jitter, histmatch }
    }
}

/// Draws a symmetry, jitter parameters and a histogram-matching decision from
/// `rng` and applies them: geometry first, then matching of one uniformly
/// chosen image against `reference`, then jitter of both images. Matching is
/// skipped when no reference is given.
pub fn apply_policy<R: Rng>(
    sample: &PatchSample,
    policy: &AugmentPolicy,
    rng: &mut R,
    reference: Option<HistReference<'_>>,
) -> Result<PatchSample, AugmentError> {
    policy.validate()?;
    let draw = AugmentDraw::draw(policy, rng);
    apply_draw(sample, &draw, policy.hist_bins, reference)
}

pub fn apply_draw(
    sample: &PatchSample,
    draw: &AugmentDraw,
    hist_bins: usize,
    reference: Option<HistReference<'_>>,
) -> Result<PatchSample, AugmentError> {
    let mut out = geometric_transform(sample, draw.g);
    let n = out.pixels();
    if let (Some(which), Some(r)) = (draw.histmatch, reference) {
        let target = if which == 0 { &mut out.pre } else { &mut out.post };
        let mut matched = Vec::with_capacity(target.len());
        for b in 0..SPECTRAL_BANDS {
            let band = &target[b * n..(b + 1) * n];
            let rb = &r.spectra[b * r.valid.len()..(b + 1) * r.valid.len()];
            matched.extend(histogram_match(band, Some(&out.valid), rb, Some(r.valid), hist_bins)?);
        }
        *target = matched;
        out.meta.augmented = true;
    }
    for (planes, &(delta, k)) in [&mut out.pre, &mut out.post].into_iter().zip(&draw.jitter) {
        if delta != 0.0 || k != 1.0 {
            *planes = photometric_jitter(planes, &out.valid, delta, k);
            out.meta.augmented = true;
        }
    }
    Ok(out)
}

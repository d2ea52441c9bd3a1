use serde::{Deserialize, Serialize};

use super::PatchError;

/// Largest cloud-covered share of a patch that is still kept (inclusive).
pub const MAX_CLOUD_FRACTION: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CloudClass {
    Clear = 0,
    Thick = 1,
    Thin = 2,
    Shadow = 3,
}

impl CloudClass {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Clear),
            1 => Some(Self::Thick),
            2 => Some(Self::Thin),
            3 => Some(Self::Shadow),
            _ => None,
        }
    }

    /// Thick and thin cloud hide the ground; shadow does not.
    pub fn is_cloud(self) -> bool {
        matches!(self, Self::Thick | Self::Thin)
    }

    fn rank(self) -> u8 {
        match self {
            Self::Thick => 3,
            Self::Thin => 2,
            Self::Shadow => 1,
            Self::Clear => 0,
        }
    }
}

#[inline]
pub(crate) fn is_cloud_code(v: u8) -> bool {
    v == 1 || v == 2
}

/// Per-pixel union of two cloud masks with precedence thick > thin > shadow > clear.
pub fn merged_cloud(pre: &[u8], post: &[u8]) -> Result<Vec<u8>, PatchError> {
    assert_eq!(pre.len(), post.len(), "cloud planes differ in size");
    pre.iter()
        .zip(post)
        .enumerate()
        .map(|(index, (&a, &b))| {
            let ca = CloudClass::from_u8(a).ok_or(PatchError::CloudClass { index, value: a })?;
            let cb = CloudClass::from_u8(b).ok_or(PatchError::CloudClass { index, value: b })?;
            Ok(if ca.rank() >= cb.rank() { ca } else { cb } as u8)
        })
        .collect()
}

/// 1 where the ground is observable: valid data and no thick/thin cloud.
pub fn visible_mask(valid: &[u8], cloud: &[u8]) -> Vec<u8> {
    valid
        .iter()
        .zip(cloud)
        .map(|(&v, &c)| u8::from(v == 1 && !is_cloud_code(c)))
        .collect()
}

pub fn visible_landslide_px(gt: &[u8], cloud: &[u8], valid: &[u8]) -> u64 {
    gt.iter()
        .zip(cloud)
        .zip(valid)
        .filter(|((&g, &c), &v)| g == 1 && v == 1 && !is_cloud_code(c))
        .count() as u64
}

pub fn cloud_fraction(cloud: &[u8]) -> f64 {
    if cloud.is_empty() {
        return 0.0;
    }
    cloud.iter().filter(|&&c| is_cloud_code(c)).count() as f64 / cloud.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Nodata,
    CloudCover,
    NoVisibleLandslide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOutcome {
    Keep,
    Reject(RejectReason),
}

/// Applies the keep rules in the order nodata, cloud cover, visible landslide
/// and reports the first one that fails.
pub fn filter_patch(gt: &[u8], cloud: &[u8], valid: &[u8]) -> FilterOutcome {
    if valid.iter().any(|&v| v != 1) {
        return FilterOutcome::Reject(RejectReason::Nodata);
    }
    // Integer form of count / n <= 0.20, exact at the boundary.
    let clouded = cloud.iter().filter(|&&c| is_cloud_code(c)).count();
    if clouded * 5 > cloud.len() {
        return FilterOutcome::Reject(RejectReason::CloudCover);
    }
    if visible_landslide_px(gt, cloud, valid) == 0 {
        return FilterOutcome::Reject(RejectReason::NoVisibleLandslide);
    }
    FilterOutcome::Keep
}

/// Surface reflectance scaling: `clamp(raw / 10000, 0, 1)`.
#[inline]
pub fn normalize_s2(raw: f32) -> f32 {
    (raw / 10_000.0).clamp(0.0, 1.0)
}

pub fn normalize_s2_plane(raw: &[f32]) -> Vec<f32> {
    raw.iter().map(|&v| normalize_s2(v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const N: usize = 256 * 256;

    fn with_cloud(count: usize) -> Vec<u8> {
        let mut c = vec![0u8; N];
        c[..count].fill(1);
        c
    }

    #[test]
    fn merge_precedence() {
        let m = merged_cloud(&[1, 3, 0, 3, 2, 0], &[0, 2, 0, 0, 3, 3]).unwrap();
        assert_eq!(m, vec![1, 2, 0, 3, 2, 3]);
        assert!(matches!(
            merged_cloud(&[0, 4], &[0, 0]),
            Err(PatchError::CloudClass { index: 1, value: 4 })
        ));
    }

    #[test]
    fn filter_examples() {
        let valid = vec![1u8; N];
        let clear = vec![0u8; N];
        let empty = vec![0u8; N];
        assert_eq!(
            filter_patch(&empty, &clear, &valid),
            FilterOutcome::Reject(RejectReason::NoVisibleLandslide)
        );

        // 13107 / 65536 is the largest count at or below 20%.
        let mut gt = vec![0u8; N];
        gt[N - 1] = 1;
        assert_eq!(filter_patch(&gt, &with_cloud(13107), &valid), FilterOutcome::Keep);
        assert_eq!(
            filter_patch(&gt, &with_cloud(13108), &valid),
            FilterOutcome::Reject(RejectReason::CloudCover)
        );

        // Exactly 20% on a 10x10 patch.
        let mut c100 = vec![0u8; 100];
        c100[..20].fill(2);
        let mut g100 = vec![0u8; 100];
        g100[99] = 1;
        assert_eq!(filter_patch(&g100, &c100, &[1; 100]), FilterOutcome::Keep);
        c100[20] = 1;
        assert_eq!(
            filter_patch(&g100, &c100, &[1; 100]),
            FilterOutcome::Reject(RejectReason::CloudCover)
        );

        let mut holes = valid.clone();
        holes[7] = 0;
        assert_eq!(
            filter_patch(&gt, &with_cloud(20_000), &holes),
            FilterOutcome::Reject(RejectReason::Nodata)
        );
    }

    #[test]
    fn landslide_under_cloud_is_not_visible() {
        let gt = [1, 1, 1, 0];
        let cloud = [1, 2, 3, 0];
        assert_eq!(visible_landslide_px(&gt, &cloud, &[1; 4]), 1);
        assert_eq!(visible_mask(&[1, 1, 1, 0], &cloud), vec![0, 0, 1, 0]);
        assert_eq!(
            filter_patch(&[1, 0, 0, 0, 0, 0, 0, 0, 0, 0], &[1, 0, 0, 0, 0, 0, 0, 0, 0, 0], &[1; 10]),
            FilterOutcome::Reject(RejectReason::NoVisibleLandslide)
        );
    }

    #[test]
    fn normalization_anchors() {
        assert_eq!(normalize_s2(10_000.0), 1.0);
        assert_eq!(normalize_s2(15_000.0), 1.0);
        assert_eq!(normalize_s2(0.0), 0.0);
        assert_eq!(normalize_s2(-5.0), 0.0);
        assert_eq!(normalize_s2(2_500.0), 0.25);
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_idempotent(
            a in prop::collection::vec(0u8..4, 64),
            b in prop::collection::vec(0u8..4, 64),
        ) {
            let ab = merged_cloud(&a, &b).unwrap();
            prop_assert_eq!(&ab, &merged_cloud(&b, &a).unwrap());
            prop_assert_eq!(&merged_cloud(&a, &a).unwrap(), &a);
            prop_assert_eq!(&merged_cloud(&ab, &b).unwrap(), &ab);
        }

        #[test]
        fn normalization_is_monotone(x in -1e5f32..1e5, y in -1e5f32..1e5) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(normalize_s2(lo) <= normalize_s2(hi));
            prop_assert!((0.0..=1.0).contains(&normalize_s2(x)));
        }
    }
}

use crate::stac::{Epoch, SceneRecord};

pub const PATCH_SIZE: usize = 256;
pub const PATCH_STRIDE: usize = 128;

/// Window origins `(col, row)` in row-major order. Trailing partial windows
/// are dropped; a grid smaller than `size` on either axis yields none.
pub fn enumerate_windows(rows: usize, cols: usize, size: usize, stride: usize) -> Vec<(usize, usize)> {
    assert!(size > 0 && stride > 0, "size and stride must be positive");
    if rows < size || cols < size {
        return Vec::new();
    }
    let mut out = Vec::new();
    for row in (0..=rows - size).step_by(stride) {
        for col in (0..=cols - size).step_by(stride) {
            out.push((col, row));
        }
    }
    out
}

/// Every pre scene paired with every post scene, pre-major in input order.
/// Ambiguous scenes never appear.
pub fn assemble_pairs(scenes: &[SceneRecord]) -> Vec<(SceneRecord, SceneRecord)> {
    let pre = scenes.iter().filter(|s| s.epoch == Epoch::Pre);
    let post: Vec<&SceneRecord> = scenes.iter().filter(|s| s.epoch == Epoch::Post).collect();
    pre.flat_map(|a| post.iter().map(move |b| (a.clone(), (*b).clone())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn scene(id: &str, epoch: Epoch) -> SceneRecord {
        SceneRecord {
            item_id: id.to_string(),
            acquired: Utc.with_ymd_and_hms(2021, 8, 1, 15, 0, 0).unwrap(),
            cloud_cover_pct: None,
            asset_urls: BTreeMap::new(),
            epoch,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(enumerate_windows(512, 512, 256, 128).len(), 9);
        assert_eq!(enumerate_windows(256, 256, 256, 128), vec![(0, 0)]);
        assert!(enumerate_windows(255, 512, 256, 128).is_empty());
        assert_eq!(
            enumerate_windows(300, 520, 256, 128),
            vec![(0, 0), (128, 0), (256, 0)]
        );
    }

    #[test]
    fn pairs_are_a_cartesian_product() {
        let s = vec![
            scene("a", Epoch::Pre),
            scene("x", Epoch::Ambiguous),
            scene("b", Epoch::Pre),
            scene("c", Epoch::Post),
            scene("d", Epoch::Post),
        ];
        let ids: Vec<(String, String)> = assemble_pairs(&s)
            .into_iter()
            .map(|(a, b)| (a.item_id, b.item_id))
            .collect();
        let expect = [("a", "c"), ("a", "d"), ("b", "c"), ("b", "d")];
        assert_eq!(ids.len(), 4);
        for ((a, b), (ea, eb)) in ids.iter().zip(expect) {
            assert_eq!((a.as_str(), b.as_str()), (ea, eb));
        }
        let three_two: Vec<SceneRecord> = ["p1", "p2", "p3"]
            .iter()
            .map(|i| scene(i, Epoch::Pre))
            .chain(["q1", "q2"].iter().map(|i| scene(i, Epoch::Post)))
            .collect();
        assert_eq!(assemble_pairs(&three_two).len(), 6);
        assert!(assemble_pairs(&[scene("q", Epoch::Post)]).is_empty());
    }

    proptest! {
        #[test]
        fn windows_fit_and_are_sorted(rows in 0usize..700, cols in 0usize..700, size in 1usize..300, stride in 1usize..300) {
            let w = enumerate_windows(rows, cols, size, stride);
            for pair in w.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                prop_assert!((a.1, a.0) < (b.1, b.0));
            }
            for &(c, r) in &w {
                prop_assert!(c + size <= cols && r + size <= rows);
                prop_assert!(c % stride == 0 && r % stride == 0);
            }
            // Brute-force count of admissible origins.
            let per_axis = |n: usize| (0..n).step_by(stride).filter(|o| o + size <= n).count();
            prop_assert_eq!(w.len(), per_axis(rows) * per_axis(cols));
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dataset::{ManifestRecord, Split};
use super::PatchError;
use crate::util::{hash_str, splitmix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_inventories: Vec<String>,
    pub heldout_inventory: String,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_min_visible")]
    pub min_visible_landslide_px_eval: u64,
    #[serde(default = "default_block_size")]
    pub block_size_px: usize,
}

fn default_val_fraction() -> f64 {
    0.5
}

fn default_min_visible() -> u64 {
    200
}

fn default_block_size() -> usize {
    1024
}

impl SplitSpec {
    pub fn new(train_inventories: Vec<String>, heldout_inventory: impl Into<String>) -> Self {
        Self {
            train_inventories,
            heldout_inventory: heldout_inventory.into(),
            val_fraction: default_val_fraction(),
            min_visible_landslide_px_eval: default_min_visible(),
            block_size_px: default_block_size(),
        }
    }

    pub fn validate(&self) -> Result<(), PatchError> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(PatchError::InvalidSpec(format!(
                "val_fraction {} not in (0,1)",
                self.val_fraction
            )));
        }
        if self.block_size_px == 0 {
            return Err(PatchError::InvalidSpec("block_size_px must be > 0".into()));
        }
        if self.train_inventories.contains(&self.heldout_inventory) {
            return Err(PatchError::InvalidSpec(format!(
                "{} is both a training and the held-out inventory",
                self.heldout_inventory
            )));
        }
        Ok(())
    }
}

/// Spatial block of a record: its window origin quantized by the block edge.
pub(crate) fn block_of(r: &ManifestRecord, block_size: usize) -> (usize, usize) {
    (r.meta.window_origin.0 / block_size, r.meta.window_origin.1 / block_size)
}

/// Labels every record. Training inventories go to `train`; held-out records
/// below the visibility minimum become `excluded_eval`; the rest are assigned
/// to `val`/`test` per spatial block. Blocks are visited in a seed-dependent
/// hashed order and each goes to whichever side is furthest below its target
/// share, so a block never straddles the two sides and the realized shares
/// stay within one block of the target.
pub fn split_dataset(
    records: &[ManifestRecord],
    spec: &SplitSpec,
    seed: u64,
) -> Result<Vec<ManifestRecord>, PatchError> {
    spec.validate()?;
    let mut out = records.to_vec();
    let mut blocks: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in out.iter_mut().enumerate() {
        let inv = &r.meta.inventory_id;
        if spec.train_inventories.contains(inv) {
            r.split = Split::Train;
        } else if *inv == spec.heldout_inventory {
            if r.visible_landslide_px < spec.min_visible_landslide_px_eval {
                r.split = Split::ExcludedEval;
            } else {
                blocks.entry(block_of(r, spec.block_size_px)).or_default().push(i);
            }
        } else {
            return Err(PatchError::UnknownInventory(inv.clone()));
        }
    }
    let salt = splitmix64(seed ^ hash_str(&spec.heldout_inventory));
    let mut order: Vec<((usize, usize), Vec<usize>)> = blocks.into_iter().collect();
    order.sort_by_key(|((bx, by), _)| {
        splitmix64(salt ^ splitmix64((*bx as u64) << 32 | *by as u64))
    });
    let (mut n_val, mut n_test) = (0usize, 0usize);
    for (_, members) in order {
        let total = (n_val + n_test + members.len()) as f64;
        // Pick the side whose share after adding this block lands closer to target.
        let val_err = ((n_val + members.len()) as f64 / total - spec.val_fraction).abs();
        let test_err = (n_val as f64 / total - spec.val_fraction).abs();
        let side = if val_err <= test_err { Split::Val } else { Split::Test };
        match side {
            Split::Val => n_val += members.len(),
            _ => n_test += members.len(),
        }
        for i in members {
            out[i].split = side;
        }
    }
    log::info!(
        "split: {} train, {n_val} val, {n_test} test, {} excluded",
        out.iter().filter(|r| r.split == Split::Train).count(),
        out.iter().filter(|r| r.split == Split::ExcludedEval).count()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchkit::SampleMeta;
    use proptest::prelude::*;
    use std::collections::{HashMap, HashSet};

    fn rec(inv: &str, col: usize, row: usize, visible: u64) -> ManifestRecord {
        ManifestRecord {
            meta: SampleMeta {
                sample_id: format!("{inv}_{col}_{row}_{visible}"),
                inventory_id: inv.to_string(),
                window_origin: (col, row),
                ..Default::default()
            },
            cloud_fraction: 0.0,
            visible_landslide_px: visible,
            split: Split::Unassigned,
            blob_path: String::new(),
        }
    }

    fn spec() -> SplitSpec {
        let mut s = SplitSpec::new(vec!["sulawesi".into(), "iburi".into()], "haiti");
        s.block_size_px = 512;
        s
    }

    #[test]
    fn visibility_threshold_is_strict() {
        let out = split_dataset(
            &[rec("haiti", 0, 0, 199), rec("haiti", 0, 0, 200), rec("iburi", 0, 0, 0)],
            &spec(),
            7,
        )
        .unwrap();
        assert_eq!(out[0].split, Split::ExcludedEval);
        assert!(matches!(out[1].split, Split::Val | Split::Test));
        assert_eq!(out[2].split, Split::Train);
    }

    #[test]
    fn overlapping_windows_share_a_side() {
        let out = split_dataset(
            &[rec("haiti", 0, 0, 500), rec("haiti", 128, 0, 500), rec("haiti", 1024, 0, 500)],
            &spec(),
            3,
        )
        .unwrap();
        assert_eq!(out[0].split, out[1].split);
    }

    #[test]
    fn unknown_inventory_is_an_error() {
        assert!(matches!(
            split_dataset(&[rec("mesetas", 0, 0, 500)], &spec(), 0),
            Err(PatchError::UnknownInventory(_))
        ));
        let mut bad = spec();
        bad.val_fraction = 1.0;
        assert!(split_dataset(&[], &bad, 0).is_err());
    }

    proptest! {
        #[test]
        fn blocks_never_straddle_and_shares_balance(
            seed in any::<u64>(),
            origins in prop::collection::btree_set((0usize..40, 0usize..40), 40..200),
        ) {
            let records: Vec<ManifestRecord> = origins
                .iter()
                .enumerate()
                .map(|(i, &(c, r))| {
                    let mut x = rec("haiti", c * 128, r * 128, 300);
                    x.meta.sample_id = format!("s{i}");
                    x
                })
                .collect();
            let out = split_dataset(&records, &spec(), seed).unwrap();
            let mut side_of: HashMap<(usize, usize), Split> = HashMap::new();
            let mut ids = HashSet::new();
            for r in &out {
                prop_assert!(ids.insert(r.meta.sample_id.clone()));
                prop_assert!(matches!(r.split, Split::Val | Split::Test));
                let b = block_of(r, 512);
                let prev = *side_of.entry(b).or_insert(r.split);
                prop_assert_eq!(prev, r.split);
            }
            // Each 512-px block holds at most 16 origins on the 128-px lattice.
            let val = out.iter().filter(|r| r.split == Split::Val).count() as f64;
            let n = out.len() as f64;
            prop_assert!((val / n - 0.5).abs() <= 8.0 / n + 1e-12, "val share {}", val / n);
        }
    }
}

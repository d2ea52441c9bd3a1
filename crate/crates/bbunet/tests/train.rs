use std::fs;

use landslide_bbunet::synth::{synth_set, write_synthetic_dataset, SynthConfig};
use landslide_bbunet::{evaluate, train, DiskSource, MemorySource, ModelConfig, ModelError, TrainConfig};
use landslide_core::augment::AugmentPolicy;
use landslide_core::patchkit::{read_manifest, Split};
use landslide_tensor::{encode_checkpoint, read_checkpoint};

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        seed: 3,
        model: ModelConfig {
            stages: 2,
            stage_channels: vec![4, 8],
            norm_groups: 2,
            ..ModelConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn synth(range: std::ops::Range<usize>) -> MemorySource {
    let cfg = SynthConfig {
        size: 16,
        ..SynthConfig::default()
    };
    MemorySource(synth_set(&cfg, 21, range).unwrap())
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let mut cfg = small_config(1);
    cfg.lr0 = 0.0;
    let (tr, va) = (synth(0..6), synth(6..9));
    let out = train(&cfg, &tr, &va, None).unwrap();
    let fresh = landslide_bbunet::BbuNet::<f32>::new(&cfg.model, cfg.seed).unwrap();
    for (a, b) in out.model.params().iter().zip(fresh.params()) {
        assert_eq!(a.tensor.to_vec(), b.tensor.to_vec(), "{}", a.name);
    }
    let initial = evaluate(&fresh, &va, 4).unwrap();
    assert_eq!(out.stats[0].val_loss, initial.loss);
    assert_eq!(out.best_val_loss, initial.loss);
}

#[test]
fn runs_are_deterministic_and_persisted() {
    let cfg = small_config(3);
    let (tr, va) = (synth(0..6), synth(6..9));
    let dir = tempfile::tempdir().unwrap();
    let a = train(&cfg, &tr, &va, Some(dir.path())).unwrap();
    let b = train(&cfg, &tr, &va, None).unwrap();
    assert_eq!(a.stats.len(), 3);
    assert!(a.stats.iter().zip(&b.stats).all(|(x, y)| x.same_run(y)));
    assert_eq!(encode_checkpoint(&a.best).unwrap(), encode_checkpoint(&b.best).unwrap());

    let min = a.stats.iter().map(|s| s.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val_loss, min);
    let first_min = a.stats.iter().position(|s| s.val_loss == min).unwrap();
    assert_eq!(a.best_epoch, first_min);

    for e in 0..3 {
        let ck = read_checkpoint(&dir.path().join(format!("epoch_{e}.ckpt"))).unwrap();
        assert_eq!(ck.header.epoch, e);
        assert_eq!(ck.header.val_loss, a.stats[e].val_loss);
    }
    let best_on_disk = fs::read(dir.path().join(format!("epoch_{}.ckpt", a.best_epoch))).unwrap();
    assert_eq!(best_on_disk, encode_checkpoint(&a.best).unwrap());
    let log = fs::read_to_string(dir.path().join("epochs.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    for (l, s) in log.lines().zip(&a.stats) {
        let parsed: landslide_bbunet::EpochStats = serde_json::from_str(l).unwrap();
        assert!(parsed.same_run(s));
    }
    assert!((a.stats[2].lr - 0.01 * 0.95f64.powi(2)).abs() < 1e-15);
}

#[test]
fn failure_modes() {
    let cfg = small_config(1);
    let empty = MemorySource(Vec::new());
    assert!(matches!(train(&cfg, &empty, &synth(0..2), None), Err(ModelError::EmptyDataset(_))));
    assert!(matches!(train(&cfg, &synth(0..2), &empty, None), Err(ModelError::EmptyDataset(_))));

    let mut bad = synth(0..2);
    bad.0[1].pre[5] = f32::NAN;
    match train(&cfg, &bad, &synth(2..3), None) {
        Err(ModelError::NonFinite { batch_ids, grad_norms, .. }) => {
            assert_eq!(batch_ids.len(), 2);
            assert!(!grad_norms.is_empty());
        }
        other => panic!("expected non-finite abort, got {:?}", other.map(|o| o.best_epoch)),
    }

    let mut mismatch = small_config(1);
    mismatch.pos_weight = 2.0;
    assert!(matches!(mismatch.validate(), Err(ModelError::Config(_))));
}

#[test]
fn config_json_round_trip() {
    let cfg = small_config(2);
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    let back: TrainConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: TrainConfig = serde_json::from_str(r#"{"epochs": 4, "seed": 9}"#).unwrap();
    assert_eq!(partial.batch_size, 64);
    assert_eq!(partial.augment, AugmentPolicy::default());
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 4}"#).is_err());
}

#[test]
fn disk_source_matches_memory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        size: 16,
        ..SynthConfig::default()
    };
    write_synthetic_dataset(dir.path(), &cfg, 21, [4, 2, 3]).unwrap();
    let records = read_manifest(&dir.path().join("manifest.jsonl")).unwrap();
    let test = DiskSource::split(dir.path(), &records, Split::Test);
    assert_eq!(test.records().len(), 3);
    let mem = synth(6..9);
    let model = landslide_bbunet::BbuNet::<f32>::new(&small_config(1).model, 0).unwrap();
    let a = evaluate(&model, &test, 2).unwrap();
    let b = evaluate(&model, &mem, 3).unwrap();
    assert_eq!(a.counts, b.counts);
    assert!((a.loss - b.loss).abs() < 1e-12);
}

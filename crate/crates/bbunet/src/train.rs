use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use landslide_core::augment::{apply_policy, augment_rng, AugmentPolicy, HistReference};
use landslide_core::patchkit::PatchSample;
use landslide_tensor::{no_grad, write_checkpoint, AdamHyper, AdamW, Checkpoint, LrSchedule};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    collate, masked_weighted_bce, masked_weighted_bce_sum, predict_mask, BbuNet, ConfusionCounts, ModelConfig,
    ModelError, SampleSource,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub gamma: f64,
    pub weight_decay: f64,
    pub pos_weight: f64,
    pub seed: u64,
    /// Dataset directory, used by the command line.
    pub dataset_dir: Option<String>,
    pub model: ModelConfig,
    pub augment: AugmentPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            lr0: 0.01,
            gamma: 0.95,
            weight_decay: 1e-4,
            pos_weight: 5.0,
            seed: 0,
            dataset_dir: None,
            model: ModelConfig::default(),
            augment: AugmentPolicy::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1".into());
        }
        // lr0 = 0 is allowed: a frozen run that only measures losses.
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 {} must be finite and non-negative", self.lr0));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} not in (0,1]", self.gamma));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if self.pos_weight != self.model.loss_pos_weight {
            return bad(format!(
                "pos_weight {} differs from model.loss_pos_weight {}",
                self.pos_weight, self.model.loss_pos_weight
            ));
        }
        self.model.validate()?;
        self.augment.validate()?;
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr0: self.lr0,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub steps: usize,
    pub wall_time_s: f64,
}

impl EpochStats {
    /// Equality of everything except wall time.
    pub fn same_run(&self, other: &EpochStats) -> bool {
        self.epoch == other.epoch
            && self.train_loss.to_bits() == other.train_loss.to_bits()
            && self.val_loss.to_bits() == other.val_loss.to_bits()
            && self.lr.to_bits() == other.lr.to_bits()
            && self.steps == other.steps
    }
}

pub struct TrainOutcome {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best: Checkpoint,
    pub stats: Vec<EpochStats>,
    /// Model holding the best weights.
    pub model: BbuNet<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub counts: ConfusionCounts,
    /// Loss pooled over all visible pixels of the split.
    pub loss: f64,
    pub samples: usize,
}

fn augment_batch(
    raw: &[PatchSample],
    policy: &AugmentPolicy,
    seed: u64,
    epoch: usize,
) -> Result<Vec<PatchSample>, ModelError> {
    let n = raw.len();
    raw.iter()
        .enumerate()
        .map(|(j, s)| {
            let mut rng = augment_rng(seed ^ policy.seed, &s.meta.sample_id, epoch as u64);
            let reference = (n > 1).then(|| {
                let r = &raw[(j + 1) % n];
                HistReference {
                    spectra: &r.pre,
                    valid: &r.valid,
                }
            });
            Ok(apply_policy(s, policy, &mut rng, reference)?)
        })
        .collect()
}

fn load_range(src: &dyn SampleSource, idx: &[usize]) -> Result<Vec<PatchSample>, ModelError> {
    idx.iter().map(|&i| src.load(i)).collect()
}

/// Runs the model over `src` without gradients: confusion counts at the
/// configured threshold and the pooled validation loss.
pub fn evaluate(model: &BbuNet<f32>, src: &dyn SampleSource, batch_size: usize) -> Result<EvalResult, ModelError> {
    if src.is_empty() {
        return Err(ModelError::EmptyDataset("evaluation split"));
    }
    let cfg = model.config();
    let mut counts = ConfusionCounts::default();
    let (mut total, mut visible) = (0.0, 0u64);
    let idx: Vec<usize> = (0..src.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = collate::<f32>(&load_range(src, chunk)?)?;
        let logits = no_grad(|| model.forward(&batch.pre, &batch.post, &batch.dem))?;
        let logits = logits.data();
        let (s, c) = masked_weighted_bce_sum(&logits, &batch.gt, &batch.mask, cfg.loss_pos_weight);
        total += s;
        visible += c;
        counts += ConfusionCounts::from_masks(&predict_mask(&logits, cfg.threshold), &batch.gt, &batch.mask);
    }
    Ok(EvalResult {
        counts,
        loss: total / visible.max(1) as f64,
        samples: src.len(),
    })
}

fn grad_norms(model: &BbuNet<f32>) -> Vec<(String, f64)> {
    model
        .params()
        .iter()
        .map(|p| {
            let n = p
                .tensor
                .grad_ref()
                .as_ref()
                .map_or(0.0, |g| g.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt());
            (p.name.clone(), n)
        })
        .collect()
}

/// Trains from a seeded initialization. Each epoch shuffles with a stream
/// keyed by `(seed, epoch)`, augments, steps AdamW at `lr0·gamma^epoch`,
/// then measures the validation loss without augmentation. With `out_dir`,
/// every epoch's checkpoint and a JSONL line of [`EpochStats`] are written.
/// The returned model holds the weights of the epoch with the lowest
/// validation loss (earliest on ties).
pub fn train(
    config: &TrainConfig,
    train_set: &dyn SampleSource,
    val_set: &dyn SampleSource,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset("train split"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptyDataset("val split"));
    }
    let model = BbuNet::<f32>::new(&config.model, config.seed)?;
    let hyper = AdamHyper {
        weight_decay: config.weight_decay,
        ..AdamHyper::default()
    };
    let mut opt = AdamW::new(hyper, model.params());
    let schedule = config.schedule();
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            File::create(dir.join("epochs.jsonl"))?;
            Some(OpenOptions::new().append(true).open(dir.join("epochs.jsonl"))?)
        }
        None => None,
    };

    let mut stats = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Checkpoint)> = None;
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let lr = schedule.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);

        let (mut loss_sum, mut steps) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let raw = load_range(train_set, chunk)?;
            let batch = collate::<f32>(&augment_batch(&raw, &config.augment, config.seed, epoch)?)?;
            for p in model.params() {
                p.tensor.zero_grad();
            }
            let logits = model.forward(&batch.pre, &batch.post, &batch.dem)?;
            let loss = masked_weighted_bce(&logits, &batch.gt, &batch.mask, config.pos_weight)?;
            let value = f64::from(loss.item());
            loss.backward()?;
            if !value.is_finite() {
                return Err(ModelError::NonFinite {
                    epoch,
                    batch_ids: batch.ids,
                    loss: value,
                    grad_norms: grad_norms(&model),
                });
            }
            opt.step(model.params(), lr)?;
            loss_sum += value;
            steps += 1;
        }

        let val = evaluate(&model, val_set, config.batch_size)?;
        if !val.loss.is_finite() {
            return Err(ModelError::NonFinite {
                epoch,
                batch_ids: (0..val_set.len()).map(|i| val_set.sample_id(i).to_string()).collect(),
                loss: val.loss,
                grad_norms: Vec::new(),
            });
        }
        let st = EpochStats {
            epoch,
            train_loss: loss_sum / steps as f64,
            val_loss: val.loss,
            lr,
            steps,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.6}, val loss {:.6}, lr {lr:.3e}, {:.1}s",
            st.train_loss,
            st.val_loss,
            st.wall_time_s
        );
        let ck = Checkpoint::capture(model.params(), &opt, epoch, val.loss, model.config_value());
        if let (Some(dir), Some(f)) = (out_dir, log_file.as_mut()) {
            write_checkpoint(&dir.join(format!("epoch_{epoch}.ckpt")), &ck)?;
            writeln!(f, "{}", serde_json::to_string(&st)?)?;
        }
        if best.as_ref().is_none_or(|b| val.loss < b.1) {
            best = Some((epoch, val.loss, ck));
        }
        stats.push(st);
    }

    let (best_epoch, best_val_loss, best_ck) = best.expect("at least one epoch");
    model.load(&best_ck)?;
    Ok(TrainOutcome {
        best_epoch,
        best_val_loss,
        best: best_ck,
        stats,
        model,
    })
}

use landslide_tensor::ops::{sigmoid_scalar, softplus_scalar};
use landslide_tensor::{Real, Tensor};

use crate::ModelError;

fn check(logits: &Tensor<impl Real>, gt: &[u8], mask: &[u8]) -> Result<(), ModelError> {
    let n = logits.numel();
    if gt.len() != n || mask.len() != n {
        return Err(ModelError::Shape(format!(
            "{n} logits, {} labels, {} mask values",
            gt.len(),
            mask.len()
        )));
    }
    Ok(())
}

/// Unnormalized loss sum and visible-pixel count, for pooling over batches.
pub fn masked_weighted_bce_sum<T: Real>(
    logits: &[T],
    gt: &[u8],
    mask: &[u8],
    pos_weight: f64,
) -> (f64, u64) {
    let mut total = 0.0;
    let mut count = 0u64;
    for ((&x, &y), &m) in logits.iter().zip(gt).zip(mask) {
        if m == 0 {
            continue;
        }
        count += 1;
        let x = x.as_f64();
        total += if y != 0 {
            pos_weight * softplus_scalar(-x)
        } else {
            softplus_scalar(x)
        };
    }
    (total, count)
}

/// Class-weighted binary cross-entropy over visible pixels:
/// `Σ m·[w·y·softplus(−x) + (1−y)·softplus(x)] / max(1, Σ m)`.
/// Pixels with `mask == 0` contribute neither value nor gradient.
pub fn masked_weighted_bce<T: Real>(
    logits: &Tensor<T>,
    gt: &[u8],
    mask: &[u8],
    pos_weight: f64,
) -> Result<Tensor<T>, ModelError> {
    check(logits, gt, mask)?;
    let (total, count) = masked_weighted_bce_sum(&logits.data(), gt, mask, pos_weight);
    if count == 0 {
        log::warn!("loss over a batch without visible pixels");
    }
    let denom = count.max(1) as f64;
    let (gt, mask) = (gt.to_vec(), mask.to_vec());
    let x = logits.clone();
    Ok(Tensor::from_op(
        vec![],
        vec![T::of(total / denom)],
        vec![logits.clone()],
        Box::new(move |g, _| {
            let scale = g[0] / T::of(denom);
            let w = T::of(pos_weight);
            let grad = x
                .data()
                .iter()
                .zip(gt.iter().zip(&mask))
                .map(|(&xi, (&y, &m))| match (m, y) {
                    (0, _) => T::zero(),
                    (_, 0) => scale * sigmoid_scalar(xi),
                    _ => -scale * w * sigmoid_scalar(-xi),
                })
                .collect();
            vec![Some(grad)]
        }),
    ))
}

/// `1` where `sigmoid(x) > threshold`, evaluated as `x > logit(threshold)`
/// so that 0.5 maps exactly to `x > 0`.
pub fn predict_mask<T: Real>(logits: &[T], threshold: f64) -> Vec<u8> {
    let cut = (threshold / (1.0 - threshold)).ln();
    logits.iter().map(|&x| u8::from(x.as_f64() > cut)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn anchors() {
        let x = Tensor::leaf(&[1, 1, 1, 3], vec![0.0f64, 0.0, 7.0]);
        let l = masked_weighted_bce(&x, &[1, 0, 1], &[1, 1, 0], 5.0).unwrap();
        assert!((l.item() - (5.0 * LN_2 + LN_2) / 2.0).abs() < 1e-12);
        l.backward().unwrap();
        let g = x.grad().unwrap();
        assert!((g[0] + 5.0 * 0.5 / 2.0).abs() < 1e-12);
        assert!((g[1] - 0.5 / 2.0).abs() < 1e-12);
        assert_eq!(g[2], 0.0);
    }

    #[test]
    fn empty_visible_set() {
        let x = Tensor::leaf(&[2], vec![1.0f32, -4.0]);
        let l = masked_weighted_bce(&x, &[1, 0], &[0, 0], 5.0).unwrap();
        assert_eq!(l.item(), 0.0);
        l.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
        assert!(masked_weighted_bce(&x, &[1], &[0, 0], 5.0).is_err());
    }

    #[test]
    fn threshold_boundary() {
        assert_eq!(predict_mask(&[0.0f32, 3.0, -3.0, 1e-30], 0.5), vec![0, 1, 0, 1]);
        let p = predict_mask(&[0.0f64, 1.0, 2.0], 0.8);
        assert_eq!(p, vec![0, 0, 1]);
    }
}

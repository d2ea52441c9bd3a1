use landslide_bbunet::{masked_weighted_bce, predict_mask, BbuNet, ConfusionCounts, ModelConfig};
use landslide_tensor::ops::sigmoid_scalar;
use landslide_tensor::{grad_check, seeded_rng, GradCheckOptions, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

#[test]
fn anchor_contributions() {
    let one = |y: u8| {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![0.0f64]);
        masked_weighted_bce(&x, &[y], &[1], 5.0).unwrap().item()
    };
    assert!((one(1) - 5.0 * 2f64.ln()).abs() < 1e-6);
    assert!((one(1) - 3.46574).abs() < 1e-5);
    assert!((one(0) - 0.69315).abs() < 1e-5);
}

#[test]
fn masked_logits_change_nothing() {
    let cfg = ModelConfig {
        stages: 2,
        stage_channels: vec![4, 8],
        norm_groups: 2,
        ..ModelConfig::default()
    };
    let m = BbuNet::<f32>::new(&cfg, 1).unwrap();
    let mut rng = seeded_rng(2);
    let rand = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| (0..n).map(|_| rng.random::<f32>()).collect::<Vec<_>>();
    let pre = Tensor::from_vec(&[2, 12, 8, 8], rand(&mut rng, 1536));
    let post = Tensor::from_vec(&[2, 12, 8, 8], rand(&mut rng, 1536));
    let dem = Tensor::from_vec(&[2, 4, 8, 8], rand(&mut rng, 512));
    let gt: Vec<u8> = (0..128).map(|_| u8::from(rng.random_bool(0.3))).collect();
    let mask: Vec<u8> = (0..128).map(|_| u8::from(rng.random_bool(0.7))).collect();
    let delta: Vec<f32> = mask.iter().map(|&v| if v == 0 { 100.0 } else { 0.0 }).collect();
    let run = |shift: f32| {
        for p in m.params() {
            p.tensor.zero_grad();
        }
        let y = m.forward(&pre, &post, &dem).unwrap();
        let d: Vec<f32> = delta.iter().map(|v| v * shift).collect();
        let y = landslide_tensor::ops::add(&y, &Tensor::from_vec(&[2, 1, 8, 8], d)).unwrap();
        let l = masked_weighted_bce(&y, &gt, &mask, 5.0).unwrap();
        l.backward().unwrap();
        let grads: Vec<Vec<u32>> = m
            .params()
            .iter()
            .map(|p| p.tensor.grad().unwrap().iter().map(|g| g.to_bits()).collect())
            .collect();
        (l.item().to_bits(), grads)
    };
    let base = run(0.0);
    assert_eq!(run(1.0), base);
    assert_eq!(run(-1.0), base);
}

#[test]
fn loss_gradient_matches_finite_differences() {
    for seed in 0..10 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(1..40);
        let x = Tensor::leaf(&[n], (0..n).map(|_| rng.random_range(-6.0..6.0)).collect());
        let gt: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let mask: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.7))).collect();
        let r = grad_check(
            |t| Ok(masked_weighted_bce(&t[0], &gt, &mask, 5.0).unwrap()),
            std::slice::from_ref(&x),
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }
}

proptest! {
    #[test]
    fn positive_weight_scales_mirrored_loss(xs in prop::collection::vec(-20.0f64..20.0, 1..64), w in 0.5f64..10.0) {
        let n = xs.len();
        let pos = masked_weighted_bce(&Tensor::from_vec(&[n], xs.clone()), &vec![1; n], &vec![1; n], w).unwrap().item();
        let neg_x: Vec<f64> = xs.iter().map(|v| -v).collect();
        let neg = masked_weighted_bce(&Tensor::from_vec(&[n], neg_x), &vec![0; n], &vec![1; n], w).unwrap().item();
        prop_assert!((pos - w * neg).abs() <= 1e-12 * (1.0 + pos.abs()));
    }

    #[test]
    fn threshold_half_equals_logit_sign(xs in prop::collection::vec(-30.0f32..30.0, 1..64)) {
        let p = predict_mask(&xs, 0.5);
        for (x, m) in xs.iter().zip(&p) {
            prop_assert_eq!(*m, u8::from(*x > 0.0));
            if x.abs() > 1e-6 {
                prop_assert_eq!(*m, u8::from(sigmoid_scalar(f64::from(*x)) > 0.5));
            }
        }
    }

    #[test]
    fn confusion_invariants(
        px in prop::collection::vec((0u8..2, 0u8..2, 0u8..2), 1..200),
        seed in 0u64..1000,
    ) {
        let pred: Vec<u8> = px.iter().map(|t| t.0).collect();
        let gt: Vec<u8> = px.iter().map(|t| t.1).collect();
        let mask: Vec<u8> = px.iter().map(|t| t.2).collect();
        let c = ConfusionCounts::from_masks(&pred, &gt, &mask);
        prop_assert_eq!(c.total(), mask.iter().filter(|&&m| m == 1).count() as u64);

        // Order of accumulation over chunks does not matter.
        let mut chunks: Vec<(usize, usize)> = (0..px.len()).step_by(7).map(|s| (s, (s + 7).min(px.len()))).collect();
        chunks.shuffle(&mut seeded_rng(seed));
        let mut acc = ConfusionCounts::default();
        for (a, b) in chunks {
            acc += ConfusionCounts::from_masks(&pred[a..b], &gt[a..b], &mask[a..b]);
        }
        prop_assert_eq!(acc, c);

        // Labels under ignored pixels never count.
        let flipped: Vec<u8> = gt.iter().zip(&mask).map(|(&g, &m)| if m == 0 { 1 - g } else { g }).collect();
        prop_assert_eq!(ConfusionCounts::from_masks(&pred, &flipped, &mask), c);

        let (p, r, f) = (c.precision(), c.recall(), c.f1());
        prop_assert!((f * (p + r) - 2.0 * p * r).abs() < 1e-12);
        prop_assert!(f <= p + r + 1e-15);
    }
}

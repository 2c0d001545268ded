//! Loss values on hand-evaluated examples and analytic gradients against
//! central finite differences.

mod common;

use common::{central_diff, random_mask, rel_error, REL_TOL};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitseg::losses::{
    cls_cross_entropy, cls_cross_entropy_grad_logits, cls_cross_entropy_grad_probs, mask_bce, mask_bce_grad_logits,
    mask_bce_grad_probs, mask_bce_logits, per_class_mask_loss_target, smooth_l1, smooth_l1_grad, Reduction,
};
use splitseg::synth::InstanceAnnotation;
use splitseg::{BBox, BinaryMask, ClassDistribution, ClassLabel};

const INSTANCES: usize = 100;

#[test]
fn cross_entropy_hand_values() {
    let one_hot = ClassDistribution::new(vec![0.0f64, 0.0, 1.0]).unwrap();
    assert_eq!(cls_cross_entropy(&one_hot, ClassLabel(2)).unwrap().value, 0.0);
    let uniform = ClassDistribution::new(vec![0.25f64; 4]).unwrap();
    for t in 0..4 {
        let v = cls_cross_entropy(&uniform, ClassLabel(t)).unwrap().value;
        assert!((v - 1.386294361119891).abs() < 1e-9);
    }
    let d = ClassDistribution::new(vec![0.6f64, 0.1, 0.3]).unwrap();
    assert!((cls_cross_entropy(&d, ClassLabel(1)).unwrap().value - 10f64.ln()).abs() < 1e-9);
}

#[test]
fn smooth_l1_hand_values() {
    let v = |x: f64| smooth_l1(&[x], Reduction::Sum).unwrap().value;
    assert_eq!(v(0.0), 0.0);
    assert!((v(0.5) - 0.125).abs() < 1e-9);
    assert!((v(-3.0) - 2.5).abs() < 1e-9);
    let mean = smooth_l1(&[0.5f64, -3.0], Reduction::Mean).unwrap();
    assert!((mean.value - 1.3125).abs() < 1e-9);
    assert_eq!(mean.count, 2);
}

#[test]
fn smooth_l1_is_c1_at_one() {
    let d = 1e-7;
    let v = |x: f64| smooth_l1(&[x], Reduction::Sum).unwrap().value;
    // Value continuity and matching one-sided slopes, both equal to 1.
    assert!((v(1.0 - d) - v(1.0 + d)).abs() < 3.0 * d);
    let left = (v(1.0) - v(1.0 - d)) / d;
    let right = (v(1.0 + d) - v(1.0)) / d;
    assert!((left - 1.0).abs() < 1e-6, "{left}");
    assert!((right - 1.0).abs() < 1e-6, "{right}");
    assert_eq!(smooth_l1_grad(&[1.0f64], Reduction::Sum), vec![1.0]);
    assert_eq!(smooth_l1_grad(&[-1.0f64], Reduction::Sum), vec![-1.0]);
}

#[test]
fn half_probability_mask_costs_ln2_per_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let target = random_mask(&mut rng, 28);
    let sum = mask_bce(&vec![0.5f64; 784], &target, Reduction::Sum).unwrap().value;
    assert!((sum - 784.0 * std::f64::consts::LN_2).abs() < 1e-9);
    assert!((sum - 543.43).abs() < 0.01);
    let from_logits = mask_bce_logits(&vec![0.0f64; 784], &target, Reduction::Mean).unwrap().value;
    assert!((from_logits - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn perfect_mask_prediction_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let target = random_mask(&mut rng, 28);
    let pred: Vec<f64> = target.bits().iter().map(|&b| b as f64).collect();
    let v = mask_bce(&pred, &target, Reduction::Sum).unwrap().value;
    assert!((0.0..=784.0 * 1.1e-12).contains(&v), "{v}");
}

#[test]
fn mask_bce_matches_per_pixel_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let target = random_mask(&mut rng, 8);
        let pred: Vec<f64> = (0..64).map(|_| rng.gen_range(0.001..0.999)).collect();
        let mut oracle = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                let p = pred[y * 8 + x];
                oracle -= if target.get(y, x) { p.ln() } else { (1.0 - p).ln() };
            }
        }
        let got = mask_bce(&pred, &target, Reduction::Sum).unwrap().value;
        assert!((got - oracle).abs() < 1e-9);
        let mean = mask_bce(&pred, &target, Reduction::Mean).unwrap().value;
        assert!((mean - oracle / 64.0).abs() < 1e-9);
    }
}

#[test]
fn cross_entropy_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..INSTANCES {
        let n = rng.gen_range(2..8);
        let truth = ClassLabel(rng.gen_range(0..n as u32));
        let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let f = |z: &[f64]| cls_cross_entropy(&ClassDistribution::from_logits(z), truth).unwrap().value;
        let dist = ClassDistribution::from_logits(&logits);
        let err = rel_error(&cls_cross_entropy_grad_logits(&dist, truth), &central_diff(f, &logits));
        assert!(err < REL_TOL, "logit gradient error {err}");

        // Gradient with respect to the probability vector itself.
        let probs = dist.probs().to_vec();
        let g = |p: &[f64]| -p[truth.index()].ln();
        let err = rel_error(&cls_cross_entropy_grad_probs(&dist, truth), &central_diff(g, &probs));
        assert!(err < REL_TOL, "probability gradient error {err}");
    }
}

#[test]
fn smooth_l1_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..INSTANCES {
        let reduction = if k % 2 == 0 { Reduction::Sum } else { Reduction::Mean };
        let x: Vec<f64> = (0..4)
            .map(|_| loop {
                let v: f64 = rng.gen_range(-3.0..3.0);
                if (v.abs() - 1.0).abs() > 1e-3 {
                    break v;
                }
            })
            .collect();
        let f = |v: &[f64]| smooth_l1(v, reduction).unwrap().value;
        let err = rel_error(&smooth_l1_grad(&x, reduction), &central_diff(f, &x));
        assert!(err < REL_TOL, "error {err}");
    }
}

#[test]
fn mask_bce_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for k in 0..INSTANCES {
        let reduction = if k % 2 == 0 { Reduction::Sum } else { Reduction::Mean };
        let target = random_mask(&mut rng, 6);
        let probs: Vec<f64> = (0..36).map(|_| rng.gen_range(0.05..0.95)).collect();
        let f = |p: &[f64]| mask_bce(p, &target, reduction).unwrap().value;
        let err = rel_error(&mask_bce_grad_probs(&probs, &target, reduction), &central_diff(f, &probs));
        assert!(err < REL_TOL, "probability gradient error {err}");

        let logits: Vec<f64> = (0..36).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let g = |z: &[f64]| mask_bce_logits(z, &target, reduction).unwrap().value;
        let err = rel_error(&mask_bce_grad_logits(&logits, &target, reduction), &central_diff(g, &logits));
        assert!(err < REL_TOL, "logit gradient error {err}");
    }
}

#[test]
fn losses_are_non_negative() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..INSTANCES {
        let z: Vec<f64> = (0..5).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d = ClassDistribution::from_logits(&z);
        assert!(cls_cross_entropy(&d, ClassLabel(rng.gen_range(0..5))).unwrap().value >= 0.0);
        assert!(smooth_l1(&z, Reduction::Mean).unwrap().value >= 0.0);
        let t = random_mask(&mut rng, 4);
        let p: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        assert!(mask_bce(&p, &t, Reduction::Sum).unwrap().value >= 0.0);
    }
}

#[test]
fn mask_target_on_hand_fixture() {
    // 4x4 mask inside an 8x8 canvas at rows 2..6, columns 1..5:
    //   1 1 0 0
    //   1 1 0 0
    //   0 0 1 1
    //   0 0 1 1
    let rows = ["1100", "1100", "0011", "0011"];
    let mask = BinaryMask::from_fn(8, 8, |y, x| {
        (2..6).contains(&y) && (1..5).contains(&x) && rows[y - 2].as_bytes()[x - 1] == b'1'
    });
    let gt = InstanceAnnotation::from_mask(ClassLabel(2), mask).unwrap();
    assert_eq!(gt.bbox, BBox::new(1.0, 2.0, 5.0, 6.0).unwrap());
    let t = per_class_mask_loss_target(&gt.bbox, ClassLabel(2), &gt, 2).unwrap();
    // Nearest neighbour at cell centres (y, x) = (0.5|2.5, 0.5|2.5) + box origin.
    assert_eq!(t.bits(), &[1, 0, 0, 1]);
    // A solid instance gives an all-ones target.
    let solid = InstanceAnnotation::from_mask(ClassLabel(1), BinaryMask::from_fn(8, 8, |y, x| y < 4 && x < 6)).unwrap();
    let t = per_class_mask_loss_target(&solid.bbox, ClassLabel(1), &solid, 28).unwrap();
    assert_eq!(t.count(), 28 * 28);
    // Wrong head class and weak overlap are refused.
    assert!(per_class_mask_loss_target(&gt.bbox, ClassLabel(1), &gt, 2).is_err());
    let far = BBox::new(5.0, 6.0, 8.0, 8.0).unwrap();
    assert!(per_class_mask_loss_target(&far, ClassLabel(2), &gt, 2).is_err());
}

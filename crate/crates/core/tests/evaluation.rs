mod common;

use common::{det, fixture, gt, images, FIXTURE_AP, H, W};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitseg::eval::{
    aggregate_delta, average_precision, compare_reports, delta, evaluate_class, match_with_ignore, misrouting_rate,
    ApBreakdown, AreaBuckets, ClassEval, EvalSide, ImageEval, MatchKind, MatchLabel, RoutedRoi, Scored,
};
use splitseg::{BBox, ClassLabel, Detection, InstanceAnnotation};

#[test]
fn greedy_matching_agrees_with_exhaustive_oracle() {
    common::check_matcher(11, 200).unwrap();
}

#[test]
fn ignored_ground_truth_absorbs_without_counting() {
    // det 0 overlaps only an ignored gt; det 1 is outside the range and unmatched.
    let ious = vec![vec![0.9, 0.0], vec![0.0, 0.1], vec![0.6, 0.8]];
    let labels = match_with_ignore(&ious, &[2, 0, 1], &[true, false], &[false, true, false], 0.5);
    assert_eq!(
        labels,
        vec![MatchLabel::Ignored, MatchLabel::Ignored, MatchLabel::TruePositive]
    );
}

#[test]
fn interpolated_ap_tracks_envelope_integral() {
    let gap = common::worst_ap_gap(5, 500);
    assert!(gap <= 0.01 + 1e-12, "gap {gap}");
}

#[test]
fn no_ground_truth_is_undefined() {
    assert_eq!(average_precision(&[], 0), None);
    let s = Scored {
        score: 0.5,
        true_positive: false,
    };
    assert_eq!(average_precision(&[s], 0), None);
    assert_eq!(average_precision(&[s], 3), Some(0.0));
}

#[test]
fn hand_computed_fixture() {
    let expected = FIXTURE_AP;
    let f = fixture();
    let buckets = AreaBuckets::for_canvas(H, W);
    for kind in [MatchKind::Mask, MatchKind::Box] {
        let b = evaluate_class(&images(&f), ClassLabel(1), kind, &buckets).unwrap();
        for v in [b.ap, b.ap50, b.ap75, b.ap_large] {
            assert!((v.unwrap() - expected).abs() < 1e-12, "{kind:?} {b:?}");
        }
        assert_eq!(b.ap_small, None);
        assert_eq!(b.ap_medium, None);
    }
    let other = evaluate_class(&images(&f), ClassLabel(2), MatchKind::Mask, &buckets).unwrap();
    assert_eq!(other, ApBreakdown::undefined());
}

#[test]
fn reported_deltas_reproduce() {
    let d = delta(Some(0.58), Some(0.622)).unwrap();
    assert!((d - 0.042).abs() < 1e-9);
    let mean = aggregate_delta(&[0.042, 0.049, 0.019, 0.018]).unwrap();
    assert!((mean - 0.032).abs() < 1e-9);
    assert_eq!(delta(None, Some(0.5)), None);
    assert_eq!(aggregate_delta(&[]), None);
}

#[test]
fn misrouting_of_uniform_routing_is_four_fifths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gts: Vec<InstanceAnnotation> = (0..5).map(|c| gt(c + 1, 12 * c as usize, 4, 10, 10)).collect();
    let mut random = Vec::new();
    let mut oracle = Vec::new();
    for _ in 0..1000 {
        let r: Vec<RoutedRoi> = gts
            .iter()
            .map(|g| RoutedRoi {
                bbox: g.bbox,
                class: ClassLabel(rng.gen_range(1..=5)),
            })
            .collect();
        random.push((r, gts.as_slice()));
        let o: Vec<RoutedRoi> = gts.iter().map(|g| RoutedRoi { bbox: g.bbox, class: g.class }).collect();
        oracle.push((o, gts.as_slice()));
    }
    let st = misrouting_rate(&random).unwrap();
    assert_eq!(st.matched, 5000);
    assert!((st.rate.unwrap() - 0.8).abs() < 0.02, "{st:?}");
    assert_eq!(misrouting_rate(&oracle).unwrap().rate, Some(0.0));

    let stray = RoutedRoi {
        bbox: BBox::new(50.0, 50.0, 60.0, 60.0).unwrap(),
        class: ClassLabel(1),
    };
    let st = misrouting_rate(&[(vec![stray], gts.as_slice())]).unwrap();
    assert_eq!((st.unmatched, st.rate), (1, None));
}

fn side(tag: &str, aps: &[Option<f64>]) -> EvalSide {
    EvalSide {
        model_tag: tag.into(),
        checkpoint_digest: tag.into(),
        dataset_digest: "d".into(),
        classes: aps
            .iter()
            .enumerate()
            .map(|(i, &ap)| ClassEval {
                class: ClassLabel(i as u32 + 1),
                name: format!("c{i}"),
                images: 10,
                instances: 12,
                breakdown: ApBreakdown {
                    ap,
                    ap50: ap.map(|v| (v + 0.1).min(1.0)),
                    ..ApBreakdown::default()
                },
            })
            .collect(),
    }
}

proptest! {
    #[test]
    fn ap_is_monotone_in_true_positives(
        entries in prop::collection::vec((0.0f64..1.0, any::<bool>()), 1..30),
        flip in any::<prop::sample::Index>(),
        extra in 0usize..4,
    ) {
        let scored: Vec<Scored> = entries.iter().map(|&(score, true_positive)| Scored { score, true_positive }).collect();
        let num_gt = scored.len() + extra;
        let base = average_precision(&scored, num_gt).unwrap();
        let mut better = scored.clone();
        better[flip.index(scored.len())].true_positive = true;
        let improved = average_precision(&better, num_gt).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(improved >= base - 1e-12);

        let mut trailing = scored.clone();
        trailing.push(Scored { score: -1.0, true_positive: false });
        prop_assert!((average_precision(&trailing, num_gt).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn compare_is_antisymmetric(aps in prop::collection::vec(prop::option::of(0.0f64..1.0), 1..6), shift in -0.3f64..0.3) {
        let before = side("a", &aps);
        let after_aps: Vec<Option<f64>> = aps.iter().map(|a| a.map(|v| (v + shift).clamp(0.0, 1.0))).collect();
        let after = side("b", &after_aps);
        let ab = compare_reports(&before, &after).unwrap();
        let ba = compare_reports(&after, &before).unwrap();
        for (x, y) in ab.classes.iter().zip(&ba.classes) {
            for (dx, dy) in x.delta.iter().zip(&y.delta) {
                prop_assert_eq!(dx.is_some(), dy.is_some());
                if let (Some(dx), Some(dy)) = (dx, dy) {
                    prop_assert!((dx + dy).abs() < 1e-12);
                }
            }
        }
        match (ab.mean_delta, ba.mean_delta) {
            (Some(x), Some(y)) => prop_assert!((x + y).abs() < 1e-12),
            (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
        }
    }

    #[test]
    fn evaluation_ignores_input_order(
        boxes in prop::collection::vec((0usize..40, 0usize..40, 4usize..24, 4usize..24), 1..8),
        jitter in prop::collection::vec((0usize..6, 0usize..6), 8),
        rot in 0usize..8,
    ) {
        let gts: Vec<InstanceAnnotation> = boxes.iter().map(|&(x, y, w, h)| gt(1, x, y, w, h)).collect();
        let dets: Vec<Detection<f64>> = boxes
            .iter()
            .zip(&jitter)
            .enumerate()
            .map(|(i, (&(x, y, w, h), &(dx, dy)))| det(1, 0.9 - 0.1 * i as f64, x + dx, y + dy, w, h))
            .collect();
        let half = gts.len() / 2;
        let (g1, g2) = gts.split_at(half);
        let (d1, d2) = dets.split_at(half);
        let buckets = AreaBuckets::for_canvas(H, W);
        let forward = [
            ImageEval { detections: d1, ground_truth: g1 },
            ImageEval { detections: d2, ground_truth: g2 },
        ];
        let mut d2r = d2.to_vec();
        let k = rot % d2r.len();
        d2r.rotate_left(k);
        let backward = [
            ImageEval { detections: &d2r, ground_truth: g2 },
            ImageEval { detections: d1, ground_truth: g1 },
        ];
        let a = evaluate_class(&forward, ClassLabel(1), MatchKind::Mask, &buckets).unwrap();
        let b = evaluate_class(&backward, ClassLabel(1), MatchKind::Mask, &buckets).unwrap();
        prop_assert_eq!(a, b);
    }
}

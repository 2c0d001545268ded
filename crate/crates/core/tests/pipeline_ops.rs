use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitseg::nn::Tensor;
use splitseg::pipeline::{nms, roi_align, FeatureMap, RoiSampler};
use splitseg::BBox;

fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox<f64> {
    BBox::new(x1, y1, x2, y2).unwrap()
}

fn iou(a: &BBox<f64>, b: &BBox<f64>) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let area = |c: &BBox<f64>| (c.x2 - c.x1) * (c.y2 - c.y1);
    inter / (area(a) + area(b) - inter)
}

/// Kept sets are the unique subset where a box survives exactly when no
/// kept box ahead of it overlaps it above the threshold.
fn nms_oracle(boxes: &[BBox<f64>], scores: &[f64], t: f64) -> Vec<usize> {
    let n = boxes.len();
    let ahead = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
    let mut fixed_points = Vec::new();
    for set in 0u32..1 << n {
        let kept = |i: usize| set & (1 << i) != 0;
        let ok = (0..n).all(|i| kept(i) == !(0..n).any(|j| kept(j) && ahead(j, i) && iou(&boxes[j], &boxes[i]) > t));
        if ok {
            fixed_points.push(set);
        }
    }
    assert_eq!(fixed_points.len(), 1);
    let mut keep: Vec<usize> = (0..n).filter(|&i| fixed_points[0] & (1 << i) != 0).collect();
    keep.sort_by(|&a, &b| if ahead(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    keep
}

#[test]
fn nms_hand_fixture() {
    let boxes = [
        bx(0.0, 0.0, 10.0, 10.0),
        bx(1.0, 1.0, 11.0, 11.0),
        bx(20.0, 20.0, 30.0, 30.0),
        bx(5.0, 0.0, 15.0, 10.0),
        bx(21.0, 21.0, 31.0, 31.0),
    ];
    let scores = [0.9, 0.8, 0.7, 0.6, 0.95];
    assert_eq!(nms(&boxes, &scores, 0.5), vec![4, 0, 3]);
    // the side-shifted box overlaps the top box at 1/3
    assert_eq!(nms(&boxes, &scores, 0.3), vec![4, 0]);
    assert_eq!(nms(&boxes, &scores, 1.0), vec![4, 0, 1, 2, 3]);
}

#[test]
fn nms_matches_fixed_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let n = rng.gen_range(1..=6);
        let boxes: Vec<BBox<f64>> = (0..n)
            .map(|_| {
                let (x, y) = (rng.gen_range(0..16) as f64, rng.gen_range(0..16) as f64);
                bx(x, y, x + rng.gen_range(2..12) as f64, y + rng.gen_range(2..12) as f64)
            })
            .collect();
        let scores: Vec<f64> = (0..n).map(|_| [0.3, 0.6, 0.9][rng.gen_range(0..3)]).collect();
        let t = [0.3, 0.5, 0.7][rng.gen_range(0..3)];
        assert_eq!(nms(&boxes, &scores, t), nms_oracle(&boxes, &scores, t), "{boxes:?} {scores:?} {t}");
    }
}

fn fmap(h: usize, w: usize, stride: usize, mut f: impl FnMut(usize, usize) -> f64) -> FeatureMap<f64> {
    let mut data = Tensor::zeros(&[1, h, w]);
    for y in 0..h {
        for x in 0..w {
            data.data[y * w + x] = f(y, x);
        }
    }
    FeatureMap { data, stride }
}

const STRIDE: usize = 4;
const MH: usize = 9;
const MW: usize = 11;

/// Random box whose samples stay at least one cell inside the map, so
/// every bilinear tap is unclamped.
fn interior_box(rng: &mut ChaCha8Rng) -> BBox<f64> {
    let s = STRIDE as f64;
    let lo_x = 1.0 * s + s / 2.0;
    let lo_y = lo_x;
    let hi_x = (MW as f64 - 1.5) * s;
    let hi_y = (MH as f64 - 1.5) * s;
    let x1 = rng.gen_range(lo_x..hi_x - 2.0);
    let y1 = rng.gen_range(lo_y..hi_y - 2.0);
    bx(x1, y1, rng.gen_range(x1 + 1.0..hi_x), rng.gen_range(y1 + 1.0..hi_y))
}

#[test]
fn roi_align_is_exact_on_ramps() {
    let (a, b, c) = (0.7, -1.3, 2.1);
    let fm = fmap(MH, MW, STRIDE, |y, x| a + b * x as f64 + c * y as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let roi = interior_box(&mut rng);
        let r = rng.gen_range(1..=7);
        let out = roi_align(&fm, &roi, r).unwrap();
        let s = STRIDE as f64;
        let (bw, bh) = ((roi.x2 - roi.x1) / s / r as f64, (roi.y2 - roi.y1) / s / r as f64);
        for ph in 0..r {
            for pw in 0..r {
                // map coordinates of the bin center; pixel centers sit at integers
                let y = roi.y1 / s - 0.5 + (ph as f64 + 0.5) * bh;
                let x = roi.x1 / s - 0.5 + (pw as f64 + 0.5) * bw;
                let want = a + b * x + c * y;
                let got = out.data.data[ph * r + pw];
                assert!((got - want).abs() < 1e-9, "{roi:?} cell ({ph},{pw}) {got} vs {want}");
            }
        }
    }
}

#[test]
fn roi_align_preserves_constants_to_the_border() {
    let fm = fmap(MH, MW, STRIDE, |_, _| 3.25);
    let full = bx(0.0, 0.0, (MW * STRIDE) as f64, (MH * STRIDE) as f64);
    for roi in [full, bx(0.0, 0.0, 5.0, 3.0), bx(30.0, 20.0, 44.0, 36.0)] {
        let out = roi_align(&fm, &roi, 5).unwrap();
        assert!(out.data.data.iter().all(|v| (v - 3.25).abs() < 1e-12), "{roi:?}");
    }
}

#[test]
fn full_image_box_reproduces_interior_of_square_map() {
    let n = 7;
    let fm = fmap(n, n, STRIDE, |y, x| 2.0 * x as f64 - 0.5 * y as f64);
    let full = bx(0.0, 0.0, (n * STRIDE) as f64, (n * STRIDE) as f64);
    let out = roi_align(&fm, &full, n).unwrap();
    for y in 1..n - 1 {
        for x in 1..n - 1 {
            assert!((out.data.data[y * n + x] - fm.data.data[y * n + x]).abs() < 1e-12);
        }
    }
}

#[test]
fn roi_align_is_linear_and_backward_is_its_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = fmap(MH, MW, STRIDE, |_, _| rng.gen_range(-1.0..1.0));
    let g = fmap(MH, MW, STRIDE, |_, _| rng.gen_range(-1.0..1.0));
    let mix = fmap(MH, MW, STRIDE, |y, x| 2.0 * f.data.data[y * MW + x] - 0.5 * g.data.data[y * MW + x]);
    for _ in 0..50 {
        let x1 = rng.gen_range(0.0..40.0);
        let y1 = rng.gen_range(0.0..30.0);
        let roi = bx(x1, y1, rng.gen_range(x1 + 0.5..44.0), rng.gen_range(y1 + 0.5..36.0));
        let (rf, rg, rm) = (
            roi_align(&f, &roi, 4).unwrap(),
            roi_align(&g, &roi, 4).unwrap(),
            roi_align(&mix, &roi, 4).unwrap(),
        );
        for i in 0..16 {
            let want = 2.0 * rf.data.data[i] - 0.5 * rg.data.data[i];
            assert!((rm.data.data[i] - want).abs() < 1e-12);
        }

        let sampler = RoiSampler::new(MH, MW, STRIDE, &roi, 4).unwrap();
        let mut up = Tensor::zeros(&[1, 4, 4]);
        for v in up.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut back = Tensor::zeros(&[1, MH, MW]);
        sampler.backward(&up, &mut back);
        let lhs: f64 = back.data.iter().zip(&f.data.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = up.data.iter().zip(&rf.data.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}

#[test]
fn boxes_outside_the_image_are_rejected() {
    let fm = fmap(MH, MW, STRIDE, |_, _| 0.0);
    assert!(roi_align(&fm, &bx(-5.0, 0.0, 10.0, 10.0), 3).is_err());
    assert!(roi_align(&fm, &bx(0.0, 0.0, 10.0, 100.0), 3).is_err());
}

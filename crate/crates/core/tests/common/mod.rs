//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splitseg::eval::{average_precision, match_with_ignore, ImageEval, MatchLabel, Scored};
use splitseg::{BinaryMask, ClassLabel, Detection, InstanceAnnotation, MaskLogits};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[i] += STEP;
            lo[i] -= STEP;
            (f(&hi) - f(&lo)) / (2.0 * STEP)
        })
        .collect()
}

/// Norm of the difference relative to the larger of the two norms.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-12)
}

pub fn random_mask(rng: &mut ChaCha8Rng, side: usize) -> BinaryMask {
    BinaryMask::from_fn(side, side, |_, _| rng.gen_bool(0.4))
}

pub const H: usize = 64;
pub const W: usize = 64;

pub fn rect_mask(x: usize, y: usize, w: usize, h: usize) -> BinaryMask {
    BinaryMask::from_fn(H, W, |yy, xx| (y..y + h).contains(&yy) && (x..x + w).contains(&xx))
}

pub fn gt(class: u32, x: usize, y: usize, w: usize, h: usize) -> InstanceAnnotation {
    InstanceAnnotation::from_mask(ClassLabel(class), rect_mask(x, y, w, h)).unwrap()
}

pub fn det(class: u32, score: f64, x: usize, y: usize, w: usize, h: usize) -> Detection<f64> {
    let mask = rect_mask(x, y, w, h);
    Detection {
        bbox: mask.tight_bbox().unwrap(),
        class: ClassLabel(class),
        score,
        mask,
        logits: MaskLogits::new(1, vec![1.0]).unwrap(),
    }
}

/// Every partial injective assignment of detections to ground truth that
/// the greedy rule could have produced, checked one detection at a time
/// against the assignment itself.
pub fn consistent_assignments(ious: &[Vec<f64>], scores: &[f64], thresh: f64) -> Vec<Vec<Option<usize>>> {
    let (nd, ng) = (ious.len(), ious[0].len());
    let earlier = |a: usize, b: usize| scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    let mut found = Vec::new();
    let total = (ng + 1).pow(nd as u32);
    'next: for code in 0..total {
        let mut c = code;
        let assign: Vec<Option<usize>> = (0..nd)
            .map(|_| {
                let v = c % (ng + 1);
                c /= ng + 1;
                (v < ng).then_some(v)
            })
            .collect();
        for a in 0..nd {
            for b in a + 1..nd {
                if assign[a].is_some() && assign[a] == assign[b] {
                    continue 'next;
                }
            }
        }
        for d in 0..nd {
            let free: Vec<usize> = (0..ng)
                .filter(|&g| !(0..nd).any(|e| earlier(e, d) && assign[e] == Some(g)))
                .filter(|&g| ious[d][g] >= thresh)
                .collect();
            let want = free.iter().copied().fold(None, |best: Option<usize>, g| match best {
                Some(b) if ious[d][b] >= ious[d][g] => Some(b),
                _ => Some(g),
            });
            if assign[d] != want {
                continue 'next;
            }
        }
        found.push(assign);
    }
    found
}

/// Exact area under the precision envelope as a function of recall.
pub fn envelope_integral(scored: &[Scored], num_gt: usize) -> f64 {
    let mut s = scored.to_vec();
    s.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut points = Vec::new();
    let mut tp = 0.0;
    for (i, e) in s.iter().enumerate() {
        if e.true_positive {
            tp += 1.0;
        }
        points.push((tp / num_gt as f64, tp / (i + 1) as f64));
    }
    let mut area = 0.0;
    let mut prev_r = 0.0;
    for &(r, _) in &points {
        if r > prev_r {
            let env = points.iter().filter(|q| q.0 >= r).map(|q| q.1).fold(0.0, f64::max);
            area += (r - prev_r) * env;
            prev_r = r;
        }
    }
    area
}

/// Runs `fixtures` random 6x4 matching problems against the exhaustive
/// oracle; returns the first disagreement.
pub fn check_matcher(seed: u64, fixtures: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = [0.0, 0.3, 0.5, 0.55, 0.7, 0.9];
    for _ in 0..fixtures {
        let ious: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| levels[rng.gen_range(0..levels.len())]).collect())
            .collect();
        let scores: Vec<f64> = (0..6).map(|_| [0.2, 0.5, 0.8][rng.gen_range(0..3)]).collect();
        let thresh = [0.5, 0.7][rng.gen_range(0..2)];
        let mut order: Vec<usize> = (0..6).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let labels = match_with_ignore(&ious, &order, &[false; 4], &[false; 6], thresh);
        let oracle = consistent_assignments(&ious, &scores, thresh);
        if oracle.len() != 1 {
            return Err(format!("{} consistent assignments for {ious:?}", oracle.len()));
        }
        for (d, a) in oracle[0].iter().enumerate() {
            let want = if a.is_some() {
                MatchLabel::TruePositive
            } else {
                MatchLabel::FalsePositive
            };
            if labels[d] != want {
                return Err(format!("det {d}: {:?} vs {want:?} on {ious:?} {scores:?} @{thresh}", labels[d]));
            }
        }
    }
    Ok(())
}

/// Largest gap between the 101-point AP and the exact integral over
/// `fixtures` random ranked lists.
pub fn worst_ap_gap(seed: u64, fixtures: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let n = rng.gen_range(1..40);
        let scored: Vec<Scored> = (0..n)
            .map(|_| Scored {
                score: rng.gen::<f64>(),
                true_positive: rng.gen_bool(0.5),
            })
            .collect();
        let tps = scored.iter().filter(|s| s.true_positive).count();
        let num_gt = tps + rng.gen_range(0..5).max(usize::from(tps == 0));
        let ap = average_precision(&scored, num_gt).unwrap();
        worst = worst.max((ap - envelope_integral(&scored, num_gt)).abs());
    }
    worst
}

pub struct Fixture {
    pub gts: Vec<Vec<InstanceAnnotation>>,
    pub dets: Vec<Vec<Detection<f64>>>,
}

/// Three images, five objects, seven detections. Every detection is
/// either exact (IoU 1) or disjoint, so all thresholds agree.
pub fn fixture() -> Fixture {
    let a = vec![gt(1, 2, 2, 20, 20), gt(1, 30, 30, 20, 20)];
    let b = vec![gt(1, 10, 10, 20, 20)];
    let c = vec![gt(1, 0, 0, 20, 20), gt(1, 40, 0, 20, 20)];
    let da = vec![
        det(1, 0.9, 2, 2, 20, 20),
        det(1, 0.8, 40, 2, 20, 20),
        det(1, 0.6, 30, 30, 20, 20),
    ];
    let db = vec![det(1, 0.95, 10, 10, 20, 20), det(1, 0.7, 10, 10, 20, 20)];
    let dc = vec![det(1, 0.5, 0, 0, 20, 20), det(1, 0.3, 20, 40, 20, 20)];
    Fixture {
        gts: vec![a, b, c],
        dets: vec![da, db, dc],
    }
}

/// Ranked: T T F F T T F over 5 objects. The envelope is 1 up to recall
/// 0.4 (41 grid points) and 2/3 up to 0.8 (40 points), 0 beyond.
pub const FIXTURE_AP: f64 = (41.0 + 40.0 * 2.0 / 3.0) / 101.0;

pub fn images(f: &Fixture) -> Vec<ImageEval<'_, f64>> {
    f.dets
        .iter()
        .zip(&f.gts)
        .map(|(d, g)| ImageEval {
            detections: d,
            ground_truth: g,
        })
        .collect()
}

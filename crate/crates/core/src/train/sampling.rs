use rand::seq::SliceRandom;
use rand::Rng;

use super::config::TrainConfig;
use crate::geometry::{encode_box_delta, iou_unchecked, BBox};
use crate::pipeline::{propose_gt_jitter, PipelineConfig};
use crate::scalar::Scalar;
use crate::synth::InstanceAnnotation;
use crate::types::ClassLabel;

/// A training ROI with its assigned label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledRoi<T> {
    pub bbox: BBox<T>,
    /// Background when no ground truth reaches the positive IoU.
    pub class: ClassLabel,
    /// Index of the matched ground truth for positives.
    pub gt: Option<usize>,
}

/// Best-overlap ground truth of `b`, lowest index on ties.
pub fn best_match<T: Scalar>(b: &BBox<T>, gts: &[InstanceAnnotation]) -> Option<(usize, f64)> {
    let b = b.cast::<f64>();
    let mut best: Option<(usize, f64)> = None;
    for (i, g) in gts.iter().enumerate() {
        let iou = iou_unchecked(&b, &g.bbox);
        if best.is_none_or(|(_, v)| iou > v) {
            best = Some((i, iou));
        }
    }
    best
}

/// Labels candidates by best IoU against the ground truth.
pub fn label_rois<T: Scalar>(cands: &[BBox<T>], gts: &[InstanceAnnotation], positive_iou: f64) -> Vec<SampledRoi<T>> {
    cands
        .iter()
        .map(|b| match best_match(b, gts) {
            Some((i, iou)) if iou >= positive_iou => SampledRoi {
                bbox: *b,
                class: gts[i].class,
                gt: Some(i),
            },
            _ => SampledRoi {
                bbox: *b,
                class: ClassLabel::BACKGROUND,
                gt: None,
            },
        })
        .collect()
}

fn random_box<T: Scalar, R: Rng>(rng: &mut R, w: usize, h: usize) -> Option<BBox<T>> {
    let side = |rng: &mut R| (rng.gen_range(4.0f64.ln()..64.0f64.ln())).exp();
    let (bw, bh) = (side(rng), side(rng));
    let x1 = rng.gen_range(0.0..(w as f64 - 2.0).max(1.0));
    let y1 = rng.gen_range(0.0..(h as f64 - 2.0).max(1.0));
    BBox {
        x1: T::lit(x1),
        y1: T::lit(y1),
        x2: T::lit(x1 + bw),
        y2: T::lit(y1 + bh),
    }
    .clip(T::from_count(w), T::from_count(h))
    .filter(|b| b.width() >= T::one() && b.height() >= T::one())
}

/// Candidate pool for one image: jittered ground truth (plus the exact
/// boxes), learned proposals, and random boxes.
pub fn candidate_rois<T: Scalar, R: Rng>(
    cfg: &PipelineConfig,
    tc: &TrainConfig,
    gts: &[InstanceAnnotation],
    learned: &[BBox<T>],
    rng: &mut R,
) -> Vec<BBox<T>> {
    let gt_boxes: Vec<BBox<T>> = gts.iter().map(|g| g.bbox.cast()).collect();
    let mut cands = gt_boxes.clone();
    for _ in 0..tc.jitter_copies {
        cands.extend(
            propose_gt_jitter(&gt_boxes, tc.jitter_amplitude, cfg.image_width, cfg.image_height, rng)
                .into_iter()
                .map(|p| p.bbox)
                .filter(|b| b.width() >= T::one() && b.height() >= T::one()),
        );
    }
    cands.extend(learned.iter().take(tc.learned_proposals).copied());
    for _ in 0..tc.random_boxes {
        if let Some(b) = random_box(rng, cfg.image_width, cfg.image_height) {
            cands.push(b);
        }
    }
    cands
}

/// Samples at most `rois_per_image` ROIs with a `positive_fraction` cap on
/// positives.
pub fn sample_rois<T: Scalar, R: Rng>(labeled: Vec<SampledRoi<T>>, tc: &TrainConfig, rng: &mut R) -> Vec<SampledRoi<T>> {
    let (mut pos, mut neg): (Vec<_>, Vec<_>) = labeled.into_iter().partition(|r| r.gt.is_some());
    pos.shuffle(rng);
    neg.shuffle(rng);
    let max_pos = (tc.rois_per_image as f64 * tc.positive_fraction).floor() as usize;
    pos.truncate(max_pos);
    neg.truncate(tc.rois_per_image - pos.len());
    pos.extend(neg);
    pos
}

/// Sampled anchor with its objectness label and, for positives, the
/// unweighted regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorTarget<T> {
    pub index: usize,
    pub positive: bool,
    pub target: Option<[T; 4]>,
}

/// Anchor labels: positive at IoU >= `rpn_positive_iou` or when the anchor
/// is a best match of some ground truth, negative below
/// `rpn_negative_iou`. Anchors are clipped to the image first; at most half
/// the batch is positive.
pub fn anchor_targets<T: Scalar, R: Rng>(
    cfg: &PipelineConfig,
    tc: &TrainConfig,
    anchors: &[BBox<T>],
    gts: &[InstanceAnnotation],
    rng: &mut R,
) -> Vec<AnchorTarget<T>> {
    let (w, h) = (T::from_count(cfg.image_width), T::from_count(cfg.image_height));
    let clipped: Vec<Option<BBox<f64>>> = anchors.iter().map(|a| a.clip(w, h).map(|b| b.cast())).collect();
    let n_gt = gts.len();
    let mut best_for_anchor = vec![(0usize, -1.0f64); anchors.len()];
    let mut best_for_gt = vec![0.0f64; n_gt];
    for (i, a) in clipped.iter().enumerate() {
        let Some(a) = a else { continue };
        for (g, gt) in gts.iter().enumerate() {
            let iou = iou_unchecked(a, &gt.bbox);
            if iou > best_for_anchor[i].1 {
                best_for_anchor[i] = (g, iou);
            }
            if iou > best_for_gt[g] {
                best_for_gt[g] = iou;
            }
        }
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, a) in clipped.iter().enumerate() {
        let Some(a) = a else { continue };
        let (g, iou) = best_for_anchor[i];
        let is_best = gts
            .iter()
            .enumerate()
            .any(|(k, gt)| best_for_gt[k] > 0.0 && iou_unchecked(a, &gt.bbox) == best_for_gt[k]);
        if n_gt > 0 && (iou >= tc.rpn_positive_iou || is_best) {
            pos.push((i, g));
        } else if iou < tc.rpn_negative_iou {
            neg.push(i);
        }
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    pos.truncate(tc.rpn_batch / 2);
    neg.truncate(tc.rpn_batch - pos.len());
    let mut out: Vec<AnchorTarget<T>> = pos
        .into_iter()
        .filter_map(|(i, g)| {
            let a = clipped[i]?;
            let d = encode_box_delta(&gts[g].bbox, &a).ok()?;
            Some(AnchorTarget {
                index: i,
                positive: true,
                target: Some(d.as_array().map(T::lit)),
            })
        })
        .collect();
    out.extend(neg.into_iter().map(|i| AnchorTarget {
        index: i,
        positive: false,
        target: None,
    }));
    out
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::box_iou;
use crate::mask::mask_iou;
use crate::scalar::Scalar;
use crate::synth::InstanceAnnotation;
use crate::types::Detection;

/// Overlap measure used for matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Mask,
    Box,
}

/// Outcome of one detection at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Matched an ignored ground truth, or unmatched and outside the area
    /// range being scored. Excluded from precision and recall.
    Ignored,
}

pub fn iou_matrix<T: Scalar>(dets: &[Detection<T>], gts: &[InstanceAnnotation], kind: MatchKind) -> Result<Vec<Vec<f64>>> {
    dets.iter()
        .map(|d| {
            gts.iter()
                .map(|g| match kind {
                    MatchKind::Mask => mask_iou(&d.mask, &g.mask),
                    MatchKind::Box => box_iou(&d.bbox.cast::<f64>(), &g.bbox),
                })
                .collect()
        })
        .collect()
}

/// Stable score-descending order, ties by input index.
pub fn score_order<T: Scalar>(dets: &[Detection<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

fn check_single_class<T: Scalar>(dets: &[Detection<T>], gts: &[InstanceAnnotation]) -> Result<()> {
    let mut classes = dets.iter().map(|d| d.class).chain(gts.iter().map(|g| g.class));
    if let Some(first) = classes.next() {
        if let Some(other) = classes.find(|&c| c != first) {
            return Err(Error::InvalidClass(format!(
                "matching mixes classes {first} and {other}"
            )));
        }
    }
    Ok(())
}

/// Greedy matching with area-range ignore flags. Labels are returned in
/// input order.
///
/// Detections are visited by descending score. Each takes the unmatched,
/// non-ignored ground truth with the highest IoU at or above `iou_thresh`
/// (lowest index on ties), falling back to an ignored one only when no
/// regular ground truth qualifies.
pub fn match_with_ignore(
    ious: &[Vec<f64>],
    order: &[usize],
    gt_ignore: &[bool],
    det_outside: &[bool],
    iou_thresh: f64,
) -> Vec<MatchLabel> {
    let n_gt = gt_ignore.len();
    let mut taken = vec![false; n_gt];
    let mut labels = vec![MatchLabel::FalsePositive; ious.len()];
    for &d in order {
        let mut best: Option<(usize, f64)> = None;
        for pass_ignored in [false, true] {
            for g in 0..n_gt {
                if taken[g] || gt_ignore[g] != pass_ignored {
                    continue;
                }
                let v = ious[d][g];
                if v >= iou_thresh && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if best.is_some() {
                break;
            }
        }
        labels[d] = match best {
            Some((g, _)) => {
                taken[g] = true;
                if gt_ignore[g] {
                    MatchLabel::Ignored
                } else {
                    MatchLabel::TruePositive
                }
            }
            None if det_outside[d] => MatchLabel::Ignored,
            None => MatchLabel::FalsePositive,
        };
    }
    labels
}

/// TP/FP label of every detection on one image for one class, in input
/// order.
pub fn match_detections<T: Scalar>(
    dets: &[Detection<T>],
    gts: &[InstanceAnnotation],
    iou_thresh: f64,
    kind: MatchKind,
) -> Result<Vec<MatchLabel>> {
    check_single_class(dets, gts)?;
    let ious = iou_matrix(dets, gts, kind)?;
    let order = score_order(dets);
    Ok(match_with_ignore(
        &ious,
        &order,
        &vec![false; gts.len()],
        &vec![false; dets.len()],
        iou_thresh,
    ))
}

use log::warn;
use serde::{Deserialize, Serialize};

use super::ap::{average_precision, Scored};
use super::matching::{iou_matrix, match_with_ignore, score_order, MatchKind, MatchLabel};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::synth::InstanceAnnotation;
use crate::types::{ClassLabel, Detection};

/// IoU thresholds `0.50, 0.55, ..., 0.95`.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| 0.5 + 0.05 * i as f64)
}

/// Half-open area interval in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaRange {
    pub min: f64,
    pub max: f64,
}

impl AreaRange {
    pub const ALL: AreaRange = AreaRange {
        min: 0.0,
        max: f64::INFINITY,
    };

    pub fn contains(&self, area: f64) -> bool {
        area >= self.min && area < self.max
    }
}

/// Small/medium/large ranges with the conventional 32 and 96 pixel sides
/// scaled by `(height * width) / 640^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBuckets {
    pub small: AreaRange,
    pub medium: AreaRange,
    pub large: AreaRange,
}

impl AreaBuckets {
    pub fn for_canvas(height: usize, width: usize) -> Self {
        let s = (height * width) as f64 / (640.0 * 640.0);
        let (a, b) = (32.0 * 32.0 * s, 96.0 * 96.0 * s);
        AreaBuckets {
            small: AreaRange { min: 0.0, max: a },
            medium: AreaRange { min: a, max: b },
            large: AreaRange {
                min: b,
                max: f64::INFINITY,
            },
        }
    }
}

/// AP summary of one class; `None` marks a metric without ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApBreakdown {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

impl ApBreakdown {
    pub const FIELDS: [&'static str; 6] = ["AP", "AP50", "AP75", "APs", "APm", "APl"];

    pub fn values(&self) -> [Option<f64>; 6] {
        [self.ap, self.ap50, self.ap75, self.ap_small, self.ap_medium, self.ap_large]
    }

    pub fn undefined() -> Self {
        Self::default()
    }
}

/// Detections and ground truth of one image.
#[derive(Debug, Clone)]
pub struct ImageEval<'a, T> {
    pub detections: &'a [Detection<T>],
    pub ground_truth: &'a [InstanceAnnotation],
}

struct PreparedImage<'a, T> {
    dets: Vec<&'a Detection<T>>,
    gts: Vec<&'a InstanceAnnotation>,
    ious: Vec<Vec<f64>>,
    order: Vec<usize>,
}

fn prepare<'a, T: Scalar>(img: &ImageEval<'a, T>, class: ClassLabel, kind: MatchKind) -> Result<PreparedImage<'a, T>> {
    let dets: Vec<&Detection<T>> = img.detections.iter().filter(|d| d.class == class).collect();
    let gts: Vec<&InstanceAnnotation> = img.ground_truth.iter().filter(|g| g.class == class).collect();
    let owned_d: Vec<Detection<T>> = dets.iter().map(|d| (*d).clone()).collect();
    let owned_g: Vec<InstanceAnnotation> = gts.iter().map(|g| (*g).clone()).collect();
    let ious = iou_matrix(&owned_d, &owned_g, kind)?;
    let order = score_order(&owned_d);
    Ok(PreparedImage { dets, gts, ious, order })
}

fn det_area<T: Scalar>(d: &Detection<T>, kind: MatchKind) -> f64 {
    match kind {
        MatchKind::Mask => d.area() as f64,
        MatchKind::Box => d.bbox.area().as_f64(),
    }
}

fn gt_area(g: &InstanceAnnotation, kind: MatchKind) -> f64 {
    match kind {
        MatchKind::Mask => g.area as f64,
        MatchKind::Box => g.bbox.area(),
    }
}

fn ap_at<T: Scalar>(images: &[PreparedImage<'_, T>], thresh: f64, range: AreaRange, kind: MatchKind) -> Option<f64> {
    let mut scored = Vec::new();
    let mut num_gt = 0;
    for img in images {
        let gt_ignore: Vec<bool> = img.gts.iter().map(|g| !range.contains(gt_area(g, kind))).collect();
        let det_outside: Vec<bool> = img.dets.iter().map(|d| !range.contains(det_area(d, kind))).collect();
        num_gt += gt_ignore.iter().filter(|&&i| !i).count();
        let labels = match_with_ignore(&img.ious, &img.order, &gt_ignore, &det_outside, thresh);
        for &d in &img.order {
            match labels[d] {
                MatchLabel::Ignored => {}
                l => scored.push(Scored {
                    score: img.dets[d].score.as_f64(),
                    true_positive: l == MatchLabel::TruePositive,
                }),
            }
        }
    }
    average_precision(&scored, num_gt)
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// AP breakdown of `class` over a set of images.
pub fn evaluate_class<T: Scalar>(
    images: &[ImageEval<'_, T>],
    class: ClassLabel,
    kind: MatchKind,
    buckets: &AreaBuckets,
) -> Result<ApBreakdown> {
    if images.is_empty() {
        warn!("no images to evaluate for class {class}; breakdown undefined");
        return Ok(ApBreakdown::undefined());
    }
    let prepared = images
        .iter()
        .map(|img| prepare(img, class, kind))
        .collect::<Result<Vec<_>>>()?;
    let thresholds = iou_thresholds();
    let over = |range: AreaRange| mean_defined(thresholds.iter().map(|&t| ap_at(&prepared, t, range, kind)));
    Ok(ApBreakdown {
        ap: over(AreaRange::ALL),
        ap50: ap_at(&prepared, 0.5, AreaRange::ALL, kind),
        ap75: ap_at(&prepared, 0.75, AreaRange::ALL, kind),
        ap_small: over(buckets.small),
        ap_medium: over(buckets.medium),
        ap_large: over(buckets.large),
    })
}

/// Mean of the defined values.
pub fn mean_over_classes(values: &[Option<f64>]) -> Option<f64> {
    mean_defined(values.iter().copied())
}

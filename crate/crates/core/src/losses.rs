//! Classification cross-entropy, smooth L1 box regression, and pixel-wise
//! binary cross-entropy for masks, each with its analytic gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, BBox};
use crate::mask::{crop_resample_nearest, BinaryMask};
use crate::scalar::{sigmoid, Scalar};
use crate::synth::InstanceAnnotation;
use crate::types::{ClassDistribution, ClassLabel};

/// Probability floor applied before every logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// IoU a ROI needs with a ground-truth box to count as its positive.
pub const POSITIVE_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Sum,
    #[default]
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue<T> {
    pub value: T,
    pub reduction: Reduction,
    /// Number of elements reduced over.
    pub count: usize,
}

impl<T: Scalar> LossValue<T> {
    fn reduce(sum: T, count: usize, reduction: Reduction) -> Self {
        let value = match reduction {
            Reduction::Sum => sum,
            Reduction::Mean if count > 0 => sum / T::from_count(count),
            Reduction::Mean => T::zero(),
        };
        LossValue {
            value,
            reduction,
            count,
        }
    }

    /// Per-element scale the reduction applies to gradients.
    pub fn grad_scale(reduction: Reduction, count: usize) -> T {
        match reduction {
            Reduction::Sum => T::one(),
            Reduction::Mean => T::one() / T::from_count(count.max(1)),
        }
    }
}

fn clamp_prob<T: Scalar>(p: T) -> T {
    let eps = T::lit(LOG_EPS);
    p.max(eps).min(T::one())
}

/// `-log(p[truth])` over all `N + 1` entries, background included.
pub fn cls_cross_entropy<T: Scalar>(dist: &ClassDistribution<T>, truth: ClassLabel) -> Result<LossValue<T>> {
    if truth.index() > dist.num_classes() {
        return Err(Error::InvalidClass(format!(
            "label {truth} outside [0, {}]",
            dist.num_classes()
        )));
    }
    let p = clamp_prob(dist.prob(truth));
    Ok(LossValue {
        value: -p.ln(),
        reduction: Reduction::Sum,
        count: 1,
    })
}

/// Gradient of [`cls_cross_entropy`] with respect to the probabilities.
pub fn cls_cross_entropy_grad_probs<T: Scalar>(dist: &ClassDistribution<T>, truth: ClassLabel) -> Vec<T> {
    let mut g = vec![T::zero(); dist.probs().len()];
    let p = dist.prob(truth);
    if p >= T::lit(LOG_EPS) {
        g[truth.index()] = -T::one() / p;
    }
    g
}

/// Gradient of the cross-entropy with respect to the pre-softmax logits.
pub fn cls_cross_entropy_grad_logits<T: Scalar>(dist: &ClassDistribution<T>, truth: ClassLabel) -> Vec<T> {
    let mut g = dist.probs().to_vec();
    g[truth.index()] -= T::one();
    g
}

#[inline]
fn smooth_l1_elem<T: Scalar>(x: T) -> T {
    if x.abs() < T::one() {
        T::lit(0.5) * x * x
    } else {
        x.abs() - T::lit(0.5)
    }
}

#[inline]
pub fn smooth_l1_elem_grad<T: Scalar>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else {
        x.signum()
    }
}

/// Smooth L1 over prediction-minus-truth differences.
pub fn smooth_l1<T: Scalar>(x: &[T], reduction: Reduction) -> Result<LossValue<T>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("smooth L1 input".into()));
    }
    let sum = x.iter().map(|&v| smooth_l1_elem(v)).sum();
    Ok(LossValue::reduce(sum, x.len(), reduction))
}

pub fn smooth_l1_grad<T: Scalar>(x: &[T], reduction: Reduction) -> Vec<T> {
    let s = LossValue::<T>::grad_scale(reduction, x.len());
    x.iter().map(|&v| smooth_l1_elem_grad(v) * s).collect()
}

fn check_mask_shapes<T>(pred: &[T], target: &BinaryMask) -> Result<()> {
    if pred.len() != target.height() * target.width() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for a {}x{} target",
            pred.len(),
            target.height(),
            target.width()
        )));
    }
    Ok(())
}

/// Pixel-wise binary cross-entropy of probabilities against a binary target.
pub fn mask_bce<T: Scalar>(pred: &[T], target: &BinaryMask, reduction: Reduction) -> Result<LossValue<T>> {
    check_mask_shapes(pred, target)?;
    let eps = T::lit(LOG_EPS);
    let one = T::one();
    let sum = pred
        .iter()
        .zip(target.bits())
        .map(|(&p, &y)| {
            let p = p.max(eps).min(one - eps);
            if y != 0 {
                -p.ln()
            } else {
                -(one - p).ln()
            }
        })
        .sum();
    Ok(LossValue::reduce(sum, pred.len(), reduction))
}

/// Gradient of [`mask_bce`] with respect to the probabilities.
pub fn mask_bce_grad_probs<T: Scalar>(pred: &[T], target: &BinaryMask, reduction: Reduction) -> Vec<T> {
    let s = LossValue::<T>::grad_scale(reduction, pred.len());
    let eps = T::lit(LOG_EPS);
    let one = T::one();
    pred.iter()
        .zip(target.bits())
        .map(|(&p, &y)| {
            let p = p.max(eps).min(one - eps);
            let g = if y != 0 { -one / p } else { one / (one - p) };
            g * s
        })
        .collect()
}

/// Mask BCE evaluated from logits (probabilities are their sigmoid).
pub fn mask_bce_logits<T: Scalar>(logits: &[T], target: &BinaryMask, reduction: Reduction) -> Result<LossValue<T>> {
    let probs: Vec<T> = logits.iter().map(|&z| sigmoid(z)).collect();
    mask_bce(&probs, target, reduction)
}

/// Gradient with respect to logits: `sigmoid(z) - y`, scaled by the reduction.
pub fn mask_bce_grad_logits<T: Scalar>(logits: &[T], target: &BinaryMask, reduction: Reduction) -> Vec<T> {
    let s = LossValue::<T>::grad_scale(reduction, logits.len());
    logits
        .iter()
        .zip(target.bits())
        .map(|(&z, &y)| (sigmoid(z) - if y != 0 { T::one() } else { T::zero() }) * s)
        .collect()
}

/// Head-resolution training target for a ROI assigned to `head_class` and
/// matched to `gt`.
pub fn per_class_mask_loss_target<T: Scalar>(
    roi: &BBox<T>,
    head_class: ClassLabel,
    gt: &InstanceAnnotation,
    resolution: usize,
) -> Result<BinaryMask> {
    if gt.class != head_class {
        return Err(Error::InvalidClass(format!(
            "ROI for head {head_class} matched a class {} instance",
            gt.class
        )));
    }
    let iou = box_iou(&roi.cast::<f64>(), &gt.bbox)?;
    if iou < POSITIVE_IOU {
        return Err(Error::InvalidArgument(format!(
            "ROI overlaps its ground truth at IoU {iou:.3} < {POSITIVE_IOU}"
        )));
    }
    Ok(crop_resample_nearest(&gt.mask, roi, resolution))
}

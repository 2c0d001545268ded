//! Box-stage inference shared by every model variant, and the baseline mask
//! stage on refined boxes.

use serde::{Deserialize, Serialize};

use super::backbone::FeatureMap;
use super::config::PipelineConfig;
use super::heads::{FcHead, MaskHead};
use super::model::PipelineModel;
use super::proposals::{generate_anchors, nms, refine_box, Proposal};
use super::roi_align::roi_align;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mask::{paste_mask, MaskLogits};
use crate::scalar::Scalar;
use crate::synth::Image;
use crate::types::{ClassDistribution, ClassLabel, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub score_thresh: f64,
    pub max_dets: usize,
    /// Learned proposals kept after NMS.
    pub proposal_count: usize,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            score_thresh: 0.05,
            max_dets: 100,
            proposal_count: 100,
        }
    }
}

/// A ROI that survived classification, refinement, and NMS.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiDecision<T> {
    pub proposal: BBox<T>,
    pub dist: ClassDistribution<T>,
    pub class: ClassLabel,
    pub score: T,
    pub refined: BBox<T>,
}

/// Raw box-head deltas for `class` (1-based).
pub fn class_deltas<T: Scalar>(raw: &[T], class: ClassLabel) -> [T; 4] {
    let o = 4 * (class.index() - 1);
    [raw[o], raw[o + 1], raw[o + 2], raw[o + 3]]
}

/// Classifies each proposal, refines its box for the argmax class, drops
/// background and low scores, and applies per-class NMS.
pub fn classify_and_refine<T: Scalar>(
    cfg: &PipelineConfig,
    cls: &FcHead<T>,
    bbox: &FcHead<T>,
    fm: &FeatureMap<T>,
    proposals: &[BBox<T>],
    opts: &InferenceOptions,
) -> Result<Vec<RoiDecision<T>>> {
    let mut kept = Vec::new();
    for p in proposals {
        let roi = roi_align(fm, p, cfg.box_resolution)?;
        let dist = cls.classify(&roi)?;
        let class = dist.argmax();
        if class.is_background() {
            continue;
        }
        let score = dist.prob(class);
        if score < T::lit(opts.score_thresh) {
            continue;
        }
        let raw = bbox.forward(&roi)?;
        let Some(refined) = refine_box(class_deltas(&raw, class), cfg.box_weights, p, cfg.image_width, cfg.image_height)
        else {
            continue;
        };
        kept.push(RoiDecision {
            proposal: *p,
            dist,
            class,
            score,
            refined,
        });
    }
    Ok(per_class_nms(kept, T::lit(cfg.det_nms_iou), opts.max_dets))
}

pub fn per_class_nms<T: Scalar>(decisions: Vec<RoiDecision<T>>, iou: T, max_dets: usize) -> Vec<RoiDecision<T>> {
    let mut keep_flags = vec![false; decisions.len()];
    let mut classes: Vec<ClassLabel> = decisions.iter().map(|d| d.class).collect();
    classes.sort();
    classes.dedup();
    for c in classes {
        let idx: Vec<usize> = (0..decisions.len()).filter(|&i| decisions[i].class == c).collect();
        let boxes: Vec<BBox<T>> = idx.iter().map(|&i| decisions[i].refined).collect();
        let scores: Vec<T> = idx.iter().map(|&i| decisions[i].score).collect();
        for k in nms(&boxes, &scores, iou) {
            keep_flags[idx[k]] = true;
        }
    }
    let mut out: Vec<(usize, RoiDecision<T>)> = decisions
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep_flags[*i])
        .collect();
    out.sort_by(|a, b| {
        b.1.score
            .partial_cmp(&a.1.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    out.into_iter().take(max_dets).map(|(_, d)| d).collect()
}

/// Turns one head-resolution logit plane into a pasted detection.
pub fn finish_detection<T: Scalar>(cfg: &PipelineConfig, decision: &RoiDecision<T>, logits: MaskLogits<T>) -> Detection<T> {
    let probs = logits.probabilities();
    let mask = paste_mask(
        &probs,
        logits.size,
        &decision.refined,
        cfg.image_height,
        cfg.image_width,
        T::lit(cfg.mask_threshold),
    );
    Detection {
        bbox: decision.refined,
        class: decision.class,
        score: decision.score,
        mask,
        logits,
    }
}

impl<T: Scalar> PipelineModel<T> {
    pub fn features(&self, image: &Image) -> Result<FeatureMap<T>> {
        self.backbone.forward(&self.config, image)
    }

    pub fn propose(&self, fm: &FeatureMap<T>, k: usize) -> Result<Vec<Proposal<T>>> {
        let anchors = generate_anchors(&self.config);
        self.rpn.propose(&self.config, &anchors, fm, k)
    }

    /// Box stage on given proposal boxes.
    pub fn decide(&self, fm: &FeatureMap<T>, proposals: &[BBox<T>], opts: &InferenceOptions) -> Result<Vec<RoiDecision<T>>> {
        classify_and_refine(&self.config, &self.cls, &self.bbox, fm, proposals, opts)
    }

    /// Masks for already-decided ROIs from the multi-class head.
    pub fn baseline_masks(&self, fm: &FeatureMap<T>, decisions: &[RoiDecision<T>]) -> Result<Vec<Detection<T>>> {
        let head = self.mask_head()?;
        if head.outputs() != self.config.num_classes {
            return Err(Error::IncompatibleModel(format!(
                "mask head has {} channels for {} classes",
                head.outputs(),
                self.config.num_classes
            )));
        }
        decisions
            .iter()
            .map(|d| {
                let roi = roi_align(fm, &d.refined, self.config.mask_roi_resolution)?;
                let logits = head.forward(&roi)?;
                Ok(finish_detection(&self.config, d, MaskHead::plane(&logits, d.class.index() - 1)))
            })
            .collect()
    }

    /// Full baseline inference with learned proposals.
    pub fn baseline_inference(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        let fm = self.features(image)?;
        let proposals: Vec<BBox<T>> = self.propose(&fm, opts.proposal_count)?.into_iter().map(|p| p.bbox).collect();
        self.baseline_inference_with(&fm, &proposals, opts)
    }

    /// Baseline inference from externally supplied proposals.
    pub fn baseline_inference_with(
        &self,
        fm: &FeatureMap<T>,
        proposals: &[BBox<T>],
        opts: &InferenceOptions,
    ) -> Result<Vec<Detection<T>>> {
        self.mask_head()?;
        let decisions = self.decide(fm, proposals, opts)?;
        self.baseline_masks(fm, &decisions)
    }
}

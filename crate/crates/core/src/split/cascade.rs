use rayon::prelude::*;

use super::model::{SplitModel, DispatchTrace, REGISTRY_PREFIX};
use super::registry::{HeadRegistry, SingleClassMaskHead};
use super::route::{route, Route};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nn::{join, ParamSet, Tensor};
use crate::pipeline::{
    class_deltas, finish_detection, per_class_nms, refine_box, roi_align, CheckpointKind, CheckpointRecord, FcHead,
    FeatureMap, InferenceOptions, MaskHead, PipelineModel, RoiDecision,
};
use crate::scalar::Scalar;
use crate::synth::Image;
use crate::types::{ClassDistribution, ClassLabel, Detection};

/// Box stage beyond the first, with its own classifier, regressor, and
/// mask-head registry.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeStage<T> {
    pub iou_threshold: f64,
    pub cls: FcHead<T>,
    pub bbox: FcHead<T>,
    pub registry: HeadRegistry<T>,
}

/// A split model with `T >= 2` box stages. Stage 1 is the base model's
/// classifier, regressor, and registry.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel<T> {
    pub first: SplitModel<T>,
    pub first_iou: f64,
    pub stages: Vec<CascadeStage<T>>,
}

/// Per-stage boxes and distributions of one proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrack<T> {
    pub proposal: BBox<T>,
    /// Refined box after each stage.
    pub boxes: Vec<BBox<T>>,
    /// Distribution of each stage, computed on that stage's input box.
    pub dists: Vec<ClassDistribution<T>>,
}

fn stage_prefix(t: usize) -> String {
    format!("stage{t}")
}

/// Default IoU thresholds for `stages` box stages: 0.5, 0.6, 0.7, ...
pub fn default_stage_ious(stages: usize) -> Vec<f64> {
    (0..stages).map(|t| 0.5 + 0.1 * t as f64).collect()
}

impl<T: Scalar> CascadeModel<T> {
    /// Adds `stages - 1` stages copied from the stage-1 heads.
    pub fn from_split(first: SplitModel<T>, ious: &[f64]) -> Result<Self> {
        if ious.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "a cascade needs at least two stages, got {}",
                ious.len()
            )));
        }
        let stages = ious[1..]
            .iter()
            .map(|&iou| CascadeStage {
                iou_threshold: iou,
                cls: first.base.cls.clone(),
                bbox: first.base.bbox.clone(),
                registry: first.registry.clone(),
            })
            .collect();
        Ok(CascadeModel {
            first_iou: ious[0],
            first,
            stages,
        })
    }

    pub fn num_stages(&self) -> usize {
        1 + self.stages.len()
    }

    pub fn stage_ious(&self) -> Vec<f64> {
        std::iter::once(self.first_iou)
            .chain(self.stages.iter().map(|s| s.iou_threshold))
            .collect()
    }

    fn base(&self) -> &PipelineModel<T> {
        &self.first.base
    }

    /// Classifier and regressor of stage `t` (0-based).
    pub fn stage_heads(&self, t: usize) -> (&FcHead<T>, &FcHead<T>) {
        if t == 0 {
            (&self.first.base.cls, &self.first.base.bbox)
        } else {
            (&self.stages[t - 1].cls, &self.stages[t - 1].bbox)
        }
    }

    pub fn stage_registry(&self, t: usize) -> &HeadRegistry<T> {
        if t == 0 {
            &self.first.registry
        } else {
            &self.stages[t - 1].registry
        }
    }

    /// Runs one proposal through every stage. Each stage refines with its
    /// most likely foreground class. `None` when a box collapses.
    pub fn track(&self, fm: &FeatureMap<T>, proposal: &BBox<T>) -> Result<Option<StageTrack<T>>> {
        let cfg = &self.base().config;
        let mut current = *proposal;
        let mut boxes = Vec::with_capacity(self.num_stages());
        let mut dists = Vec::with_capacity(self.num_stages());
        for t in 0..self.num_stages() {
            let (cls, bbox) = self.stage_heads(t);
            let roi = roi_align(fm, &current, cfg.box_resolution)?;
            let dist = cls.classify(&roi)?;
            let fg = foreground_argmax(&dist);
            let raw = bbox.forward(&roi)?;
            let Some(next) = refine_box(class_deltas(&raw, fg), cfg.box_weights, &current, cfg.image_width, cfg.image_height)
            else {
                return Ok(None);
            };
            dists.push(dist);
            boxes.push(next);
            current = next;
        }
        Ok(Some(StageTrack {
            proposal: *proposal,
            boxes,
            dists,
        }))
    }

    /// Final decisions: last-stage boxes, stage-averaged classification.
    pub fn decide(&self, fm: &FeatureMap<T>, proposals: &[BBox<T>], opts: &InferenceOptions) -> Result<Vec<RoiDecision<T>>> {
        let mut kept = Vec::new();
        for p in proposals {
            let Some(track) = self.track(fm, p)? else {
                continue;
            };
            let dist = ClassDistribution::mean(&track.dists)?;
            let class = dist.argmax();
            if class.is_background() {
                continue;
            }
            let score = dist.prob(class);
            if score < T::lit(opts.score_thresh) {
                continue;
            }
            kept.push(RoiDecision {
                proposal: *p,
                class,
                score,
                refined: *track.boxes.last().expect("at least two stages"),
                dist,
            });
        }
        Ok(per_class_nms(kept, T::lit(self.base().config.det_nms_iou), opts.max_dets))
    }

    /// Masks from the last stage's registry.
    pub fn masks(&self, fm: &FeatureMap<T>, decisions: &[RoiDecision<T>]) -> Result<(Vec<Detection<T>>, DispatchTrace)> {
        let registry = self.stage_registry(self.num_stages() - 1);
        registry.check_complete()?;
        let cfg = &self.base().config;
        let results: Vec<(Route, Option<Detection<T>>)> = decisions
            .par_iter()
            .map(|d| {
                let r = route(&d.dist)?;
                let Route::Class(class) = r else {
                    return Ok((r, None));
                };
                let roi = roi_align(fm, &d.refined, cfg.mask_roi_resolution)?;
                let logits = registry.get(class)?.head.forward(&roi)?;
                let mut d = d.clone();
                d.class = class;
                Ok((r, Some(finish_detection(cfg, &d, MaskHead::plane(&logits, 0)))))
            })
            .collect::<Result<_>>()?;
        let mut trace = DispatchTrace::default();
        let mut dets = Vec::new();
        for (r, d) in results {
            trace.routes.push(r);
            dets.extend(d);
        }
        Ok((dets, trace))
    }

    pub fn inference_with(&self, fm: &FeatureMap<T>, proposals: &[BBox<T>], opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        let decisions = self.decide(fm, proposals, opts)?;
        Ok(self.masks(fm, &decisions)?.0)
    }

    pub fn inference(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        let fm = self.base().features(image)?;
        let proposals: Vec<BBox<T>> = self
            .base()
            .propose(&fm, opts.proposal_count)?
            .into_iter()
            .map(|p| p.bbox)
            .collect();
        self.inference_with(&fm, &proposals, opts)
    }

    pub fn to_checkpoint(&self) -> Result<CheckpointRecord> {
        let base = &self.first.base;
        let mut rec = CheckpointRecord::from_params(CheckpointKind::Cascade, &base.config, &base.catalog, self)?;
        rec.header.registry = Some(
            self.first
                .registry
                .classes()
                .map(|c| (c.0, HeadRegistry::<T>::head_prefix(REGISTRY_PREFIX, c)))
                .collect(),
        );
        rec.header.provenance = Some(self.first.provenance.clone());
        rec.header.extra = Some(serde_json::json!({ "stage_ious": self.stage_ious() }));
        Ok(rec)
    }

    pub fn from_checkpoint(record: &CheckpointRecord) -> Result<Self> {
        if record.header.kind != CheckpointKind::Cascade {
            return Err(Error::IncompatibleModel(format!(
                "expected a cascade checkpoint, found {:?}",
                record.header.kind
            )));
        }
        let ious: Vec<f64> = record
            .header
            .extra
            .as_ref()
            .and_then(|e| e.get("stage_ious"))
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| Error::IncompatibleModel("cascade checkpoint has no stage thresholds".into()))?;
        let cfg = record.header.config.clone();
        let mut base = PipelineModel::zeros(cfg.clone(), record.header.catalog.clone())?;
        base.mask = None;
        let blank_registry = || {
            HeadRegistry::new(
                cfg.num_classes,
                (1..=cfg.num_classes as u32)
                    .map(|c| SingleClassMaskHead::new(ClassLabel(c), MaskHead::new(&cfg, 1)))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        let first = SplitModel {
            base,
            registry: blank_registry()?,
            provenance: record
                .header
                .provenance
                .clone()
                .ok_or_else(|| Error::IncompatibleModel("cascade checkpoint has no provenance".into()))?,
        };
        let mut model = CascadeModel::from_split(first, &ious)?;
        record.load_into(&mut model)?;
        Ok(model)
    }
}

/// Most likely foreground class, lowest id on ties.
pub fn foreground_argmax<T: Scalar>(dist: &ClassDistribution<T>) -> ClassLabel {
    let p = dist.probs();
    let mut best = 1;
    for (i, &v) in p.iter().enumerate().skip(2) {
        if v > p[best] {
            best = i;
        }
    }
    ClassLabel(best as u32)
}

impl<T: Scalar> ParamSet<T> for CascadeStage<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.cls.visit(&join(prefix, "cls"), out);
        self.bbox.visit(&join(prefix, "box"), out);
        self.registry.visit(&join(prefix, REGISTRY_PREFIX), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.cls.visit_mut(&join(prefix, "cls"), out);
        self.bbox.visit_mut(&join(prefix, "box"), out);
        self.registry.visit_mut(&join(prefix, REGISTRY_PREFIX), out);
    }
}

impl<T: Scalar> ParamSet<T> for CascadeModel<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.first.visit(prefix, out);
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &stage_prefix(i + 2)), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.first.visit_mut(prefix, out);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &stage_prefix(i + 2)), out);
        }
    }
}

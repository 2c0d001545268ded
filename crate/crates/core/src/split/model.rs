use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::registry::{HeadRegistry, SingleClassMaskHead};
use super::route::{route, Route};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nn::{join, ParamSet, Tensor};
use crate::pipeline::{
    finish_detection, roi_align, CheckpointKind, CheckpointRecord, FeatureMap, InferenceOptions, MaskHead,
    PipelineModel, Provenance, RoiDecision, SubHead,
};
use crate::scalar::Scalar;
use crate::synth::Image;
use crate::types::{ClassLabel, Detection};

pub const REGISTRY_PREFIX: &str = "registry";

/// How surgery initializes the new heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Copy the shared layers, keep the owning class's output channel.
    Slice,
    /// Fresh random initialization.
    Fresh,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Slice => "slice",
            InitMode::Fresh => "fresh",
        }
    }
}

impl std::str::FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slice" => Ok(InitMode::Slice),
            "fresh" => Ok(InitMode::Fresh),
            other => Err(Error::InvalidArgument(format!("unknown init mode {other}"))),
        }
    }
}

/// Frozen detector plus one mask head per class, selected by the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitModel<T> {
    /// Backbone, proposal, classification, and box heads; no mask head.
    pub base: PipelineModel<T>,
    pub registry: HeadRegistry<T>,
    pub provenance: Provenance,
}

/// Per-ROI switch decisions made during one inference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DispatchTrace {
    /// Route of every ROI that reached the switch, in ROI order.
    pub routes: Vec<Route>,
}

impl DispatchTrace {
    pub fn dispatch_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut m = BTreeMap::new();
        for r in &self.routes {
            if let Route::Class(c) = r {
                *m.entry(*c).or_insert(0) += 1;
            }
        }
        m
    }
}

fn fresh_seed(init_seed: u64, class: ClassLabel) -> u64 {
    init_seed ^ 0x6672_6573_6800_0000 ^ (class.0 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Replaces the multi-class mask head of `baseline` with a registry of
/// single-class heads; the rest of the model is copied unchanged.
pub fn surgery<T: Scalar>(baseline: &PipelineModel<T>, init: InitMode, source_digest: &str) -> Result<SplitModel<T>> {
    let multi = baseline
        .mask
        .as_ref()
        .ok_or_else(|| Error::IncompatibleModel("baseline has no multi-class mask head".into()))?;
    let n = baseline.config.num_classes;
    if multi.outputs() != n || baseline.catalog.len() != n {
        return Err(Error::IncompatibleModel(format!(
            "mask head has {} channels, catalog {} classes, config {n}",
            multi.outputs(),
            baseline.catalog.len()
        )));
    }
    let heads = (1..=n as u32)
        .map(ClassLabel)
        .map(|c| {
            let head = match init {
                InitMode::Slice => multi.slice_channel(c.index() - 1)?,
                InitMode::Fresh => {
                    let mut h = MaskHead::new(&baseline.config, 1);
                    h.init(&mut ChaCha8Rng::seed_from_u64(fresh_seed(baseline.config.init_seed, c)));
                    h
                }
            };
            SingleClassMaskHead::new(c, head)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut base = baseline.clone();
    base.mask = None;
    Ok(SplitModel {
        base,
        registry: HeadRegistry::new(n, heads)?,
        provenance: Provenance {
            source_digest: source_digest.to_string(),
            init_mode: init.name().to_string(),
            heads: BTreeMap::new(),
        },
    })
}

/// Surgery straight from a baseline checkpoint.
pub fn surgery_from_checkpoint<T: Scalar>(record: &CheckpointRecord, init: InitMode) -> Result<SplitModel<T>> {
    let baseline = PipelineModel::<T>::from_checkpoint(record)?;
    surgery(&baseline, init, record.digest())
}

impl<T: Scalar> SplitModel<T> {
    pub fn num_classes(&self) -> usize {
        self.base.config.num_classes
    }

    /// Mask logits for one ROI from the head `route` selects.
    pub fn dispatch(&self, fm: &FeatureMap<T>, decision: &RoiDecision<T>) -> Result<(Route, Option<Detection<T>>)> {
        let r = route(&decision.dist)?;
        let Route::Class(class) = r else {
            return Ok((r, None));
        };
        let head = self.registry.get(class)?;
        let roi = roi_align(fm, &decision.refined, self.base.config.mask_roi_resolution)?;
        let logits = head.head.forward(&roi)?;
        let mut d = decision.clone();
        d.class = class;
        Ok((r, Some(finish_detection(&self.base.config, &d, MaskHead::plane(&logits, 0)))))
    }

    /// Masks for decided ROIs; dispatch fans out but output stays in ROI order.
    pub fn split_masks(&self, fm: &FeatureMap<T>, decisions: &[RoiDecision<T>]) -> Result<(Vec<Detection<T>>, DispatchTrace)> {
        self.registry.check_complete()?;
        let results: Vec<(Route, Option<Detection<T>>)> = decisions
            .par_iter()
            .map(|d| self.dispatch(fm, d))
            .collect::<Result<_>>()?;
        let mut trace = DispatchTrace::default();
        let mut dets = Vec::new();
        for (r, d) in results {
            trace.routes.push(r);
            dets.extend(d);
        }
        Ok((dets, trace))
    }

    pub fn inference_with(
        &self,
        fm: &FeatureMap<T>,
        proposals: &[BBox<T>],
        opts: &InferenceOptions,
    ) -> Result<(Vec<Detection<T>>, DispatchTrace)> {
        let decisions = self.base.decide(fm, proposals, opts)?;
        self.split_masks(fm, &decisions)
    }

    /// Full inference with learned proposals.
    pub fn inference(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        Ok(self.inference_traced(image, opts)?.0)
    }

    pub fn inference_traced(&self, image: &Image, opts: &InferenceOptions) -> Result<(Vec<Detection<T>>, DispatchTrace)> {
        let fm = self.base.features(image)?;
        let proposals: Vec<BBox<T>> = self
            .base
            .propose(&fm, opts.proposal_count)?
            .into_iter()
            .map(|p| p.bbox)
            .collect();
        self.inference_with(&fm, &proposals, opts)
    }

    pub fn to_checkpoint(&self) -> Result<CheckpointRecord> {
        let mut rec = CheckpointRecord::from_params(CheckpointKind::Split, &self.base.config, &self.base.catalog, self)?;
        rec.header.registry = Some(
            self.registry
                .classes()
                .map(|c| (c.0, HeadRegistry::<T>::head_prefix(REGISTRY_PREFIX, c)))
                .collect(),
        );
        rec.header.provenance = Some(self.provenance.clone());
        Ok(rec)
    }

    pub fn from_checkpoint(record: &CheckpointRecord) -> Result<Self> {
        if record.header.kind != CheckpointKind::Split {
            return Err(Error::IncompatibleModel(format!(
                "expected a split checkpoint, found {:?}",
                record.header.kind
            )));
        }
        let cfg = record.header.config.clone();
        let mut base = PipelineModel::zeros(cfg.clone(), record.header.catalog.clone())?;
        base.mask = None;
        let registry_map = record
            .header
            .registry
            .as_ref()
            .ok_or_else(|| Error::IncompatibleModel("split checkpoint has no registry section".into()))?;
        let heads = registry_map
            .keys()
            .map(|&c| SingleClassMaskHead::new(ClassLabel(c), MaskHead::new(&cfg, 1)))
            .collect::<Result<Vec<_>>>()?;
        let mut model = SplitModel {
            base,
            registry: HeadRegistry::new(cfg.num_classes, heads)?,
            provenance: record
                .header
                .provenance
                .clone()
                .ok_or_else(|| Error::IncompatibleModel("split checkpoint has no provenance".into()))?,
        };
        record.load_into(&mut model)?;
        Ok(model)
    }

    /// Names of every parameter outside the head of `class`.
    pub fn names_outside_head(&self, class: ClassLabel) -> Vec<String> {
        let own = HeadRegistry::<T>::head_prefix(REGISTRY_PREFIX, class);
        self.named_params("")
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| !n.starts_with(&format!("{own}/")))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        let heads = self
            .registry
            .heads()
            .map(|h| SingleClassMaskHead {
                class: h.class,
                head: h.head.zeros_like(),
            })
            .collect();
        SplitModel {
            base: self.base.zeros_like(),
            registry: HeadRegistry::new(self.num_classes(), heads).expect("registry shape preserved"),
            provenance: self.provenance.clone(),
        }
    }
}

impl<T: Scalar> ParamSet<T> for SplitModel<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.base.visit(prefix, out);
        self.registry.visit(&join(prefix, REGISTRY_PREFIX), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.base.visit_mut(prefix, out);
        self.registry.visit_mut(&join(prefix, REGISTRY_PREFIX), out);
    }
}

/// True for parameters of the frozen base.
pub fn is_base_param(name: &str) -> bool {
    matches!(
        SubHead::of(name),
        Some(SubHead::Backbone | SubHead::Proposal | SubHead::Cls | SubHead::Box)
    ) && !name.starts_with("stage")
}

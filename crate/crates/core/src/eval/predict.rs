use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::breakdown::{evaluate_class, AreaBuckets, ImageEval};
use super::matching::MatchKind;
use super::report::{ClassEval, EvalSide};
use crate::error::Result;
use crate::geometry::{box_iou, BBox};
use crate::pipeline::{InferenceOptions, PipelineModel};
use crate::scalar::Scalar;
use crate::split::{CascadeModel, SplitModel};
use crate::synth::{split_validation_per_class, Dataset, Image, InstanceAnnotation, SceneSample};
use crate::types::{ClassCatalog, ClassLabel, Detection};

/// Anything that turns an image into detections.
pub trait Predictor<T: Scalar>: Sync {
    fn predict(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>>;
}

impl<T: Scalar> Predictor<T> for PipelineModel<T> {
    fn predict(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        self.baseline_inference(image, opts)
    }
}

impl<T: Scalar> Predictor<T> for SplitModel<T> {
    fn predict(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        self.inference(image, opts)
    }
}

impl<T: Scalar> Predictor<T> for CascadeModel<T> {
    fn predict(&self, image: &Image, opts: &InferenceOptions) -> Result<Vec<Detection<T>>> {
        self.inference(image, opts)
    }
}

/// Predictions for every sample, in sample order.
pub fn predict_all<T: Scalar, P: Predictor<T>>(
    model: &P,
    samples: &[SceneSample],
    opts: &InferenceOptions,
) -> Result<Vec<Vec<Detection<T>>>> {
    samples.par_iter().map(|s| model.predict(&s.image, opts)).collect()
}

/// Per-class breakdowns, each on the class's own validation sub-dataset.
pub fn evaluate_per_class<T: Scalar>(
    catalog: &ClassCatalog,
    samples: &[SceneSample],
    predictions: &[Vec<Detection<T>>],
    kind: MatchKind,
) -> Result<Vec<ClassEval>> {
    let buckets = samples
        .first()
        .map(|s| AreaBuckets::for_canvas(s.height(), s.width()))
        .unwrap_or_else(|| AreaBuckets::for_canvas(1, 1));
    catalog
        .foreground()
        .map(|class| {
            let subset = split_validation_per_class(samples, class);
            let images: Vec<ImageEval<'_, T>> = subset
                .samples
                .iter()
                .map(|s| {
                    let i = samples
                        .iter()
                        .position(|o| o.sample_id == s.sample_id)
                        .expect("subset drawn from samples");
                    ImageEval {
                        detections: &predictions[i],
                        ground_truth: &samples[i].annotations,
                    }
                })
                .collect();
            Ok(ClassEval {
                class,
                name: catalog.name(class).to_string(),
                images: subset.samples.len(),
                instances: subset.samples.iter().map(|s| s.annotations.len()).sum(),
                breakdown: evaluate_class(&images, class, kind, &buckets)?,
            })
        })
        .collect()
}

/// Mask-AP evaluation of a model on every per-class sub-dataset.
pub fn evaluate_model<T: Scalar, P: Predictor<T>>(
    model: &P,
    model_tag: &str,
    checkpoint_digest: &str,
    dataset: &Dataset,
    dataset_digest: &str,
    opts: &InferenceOptions,
) -> Result<EvalSide> {
    let predictions = predict_all(model, &dataset.samples, opts)?;
    Ok(EvalSide {
        model_tag: model_tag.to_string(),
        checkpoint_digest: checkpoint_digest.to_string(),
        dataset_digest: dataset_digest.to_string(),
        classes: evaluate_per_class(&dataset.catalog, &dataset.samples, &predictions, MatchKind::Mask)?,
    })
}

/// A dispatched ROI: its refined box and the class it was routed to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutedRoi {
    pub bbox: BBox<f64>,
    pub class: ClassLabel,
}

impl RoutedRoi {
    pub fn from_detection<T: Scalar>(d: &Detection<T>) -> Self {
        RoutedRoi {
            bbox: d.bbox.cast(),
            class: d.class,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MisroutingStats {
    pub dispatched: usize,
    /// Dispatched ROIs with a ground truth at IoU >= 0.5.
    pub matched: usize,
    /// Matched ROIs routed to a class other than their match's.
    pub misrouted: usize,
    /// Dispatched ROIs without any match (background false positives).
    pub unmatched: usize,
    /// `misrouted / matched`; `None` when nothing matched.
    pub rate: Option<f64>,
}

/// Routing errors of dispatched ROIs against their best-IoU ground truth.
pub fn misrouting_rate(images: &[(Vec<RoutedRoi>, &[InstanceAnnotation])]) -> Result<MisroutingStats> {
    let mut st = MisroutingStats::default();
    for (rois, gts) in images {
        for r in rois {
            st.dispatched += 1;
            let mut best: Option<(f64, ClassLabel)> = None;
            for g in gts.iter() {
                let iou = box_iou(&r.bbox, &g.bbox)?;
                if iou >= 0.5 && best.is_none_or(|(b, _)| iou > b) {
                    best = Some((iou, g.class));
                }
            }
            match best {
                Some((_, c)) => {
                    st.matched += 1;
                    if c != r.class {
                        st.misrouted += 1;
                    }
                }
                None => st.unmatched += 1,
            }
        }
    }
    st.rate = (st.matched > 0).then(|| st.misrouted as f64 / st.matched as f64);
    Ok(st)
}

/// Misrouting of a split model over a split of samples.
pub fn model_misrouting<T: Scalar>(
    model: &SplitModel<T>,
    samples: &[SceneSample],
    opts: &InferenceOptions,
) -> Result<MisroutingStats> {
    let preds = predict_all(model, samples, opts)?;
    let images: Vec<(Vec<RoutedRoi>, &[InstanceAnnotation])> = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| (p.iter().map(RoutedRoi::from_detection).collect(), s.annotations.as_slice()))
        .collect();
    misrouting_rate(&images)
}

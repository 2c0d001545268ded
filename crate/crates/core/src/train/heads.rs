use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::roi_feature;
use super::config::TrainConfig;
use super::derive_seed;
use super::optim::{add_grads, grad_norm, scale_grads, Sgd};
use super::sampling::{candidate_rois, label_rois, sample_rois};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::losses::{mask_bce_grad_logits, mask_bce_logits, per_class_mask_loss_target, Reduction};
use crate::pipeline::{generate_anchors, FeatureMap, HeadMeta, MaskHead, PipelineConfig};
use crate::scalar::Scalar;
use crate::split::{SingleClassMaskHead, SplitModel};
use crate::synth::SceneSample;
use crate::types::ClassLabel;

const HEAD_TAG: u64 = 0x6865_6164;

/// Seed of the training run of one class head.
pub fn head_seed(tc: &TrainConfig, class: ClassLabel) -> u64 {
    derive_seed(tc.seed, &[HEAD_TAG, class.0 as u64])
}

/// Frozen-base features and proposals of one image containing the class.
pub struct ClassImage<T> {
    pub sample: usize,
    pub features: FeatureMap<T>,
    pub proposals: Vec<BBox<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Sequential,
    Parallel,
}

/// A trained single-class head with its metadata.
#[derive(Debug, Clone)]
pub struct TrainedHead<T> {
    pub head: SingleClassMaskHead<T>,
    pub meta: HeadMeta,
}

fn class_images<T: Scalar>(
    model: &SplitModel<T>,
    class: ClassLabel,
    data: &[SceneSample],
    tc: &TrainConfig,
) -> Result<Vec<ClassImage<T>>> {
    let anchors = generate_anchors::<T>(&model.base.config);
    data.par_iter()
        .enumerate()
        .filter(|(_, s)| s.annotations.iter().any(|a| a.class == class))
        .map(|(i, s)| {
            let features = model.base.features(&s.image)?;
            let proposals = if tc.learned_proposals > 0 {
                model
                    .base
                    .rpn
                    .propose(&model.base.config, &anchors, &features, tc.learned_proposals)?
                    .into_iter()
                    .map(|p| p.bbox)
                    .collect()
            } else {
                Vec::new()
            };
            Ok(ClassImage {
                sample: i,
                features,
                proposals,
            })
        })
        .collect()
}

/// Mask loss and head gradient of one ROI.
#[allow(clippy::too_many_arguments)]
fn roi_mask_step<T: Scalar>(
    head: &MaskHead<T>,
    cfg: &PipelineConfig,
    fm: &FeatureMap<T>,
    roi: &BBox<T>,
    class: ClassLabel,
    gt: &crate::synth::InstanceAnnotation,
    reduction: Reduction,
    scale: T,
    grad: &mut MaskHead<T>,
) -> Result<f64> {
    let (_, feat) = roi_feature(fm, roi, cfg.mask_roi_resolution)?;
    let (logits, cache) = head.forward_cached(&feat)?;
    let target = per_class_mask_loss_target(roi, class, gt, cfg.mask_resolution)?;
    let loss = mask_bce_logits(&logits.data, &target, reduction)?.value.as_f64();
    let mut g = logits.zeros_like();
    for (d, v) in g.data.iter_mut().zip(mask_bce_grad_logits(&logits.data, &target, reduction)) {
        *d = v * scale;
    }
    head.backward(&feat, &cache, &g, grad, false);
    Ok(loss)
}

/// Mean mask loss of `head` on the exact ground-truth boxes of `class`.
fn reference_loss<T: Scalar>(
    head: &MaskHead<T>,
    cfg: &PipelineConfig,
    images: &[ClassImage<T>],
    data: &[SceneSample],
    class: ClassLabel,
    reduction: Reduction,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut scratch = head.zeros_like();
    for img in images {
        for gt in data[img.sample].annotations.iter().filter(|a| a.class == class) {
            let b = gt.bbox.cast::<T>();
            sum += roi_mask_step(head, cfg, &img.features, &b, class, gt, reduction, T::zero(), &mut scratch)?;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Trains the head of `class` on positive ROIs of that class only. The
/// model is borrowed immutably: nothing outside the returned head changes.
pub fn train_class_head<T: Scalar>(
    model: &SplitModel<T>,
    class: ClassLabel,
    data: &[SceneSample],
    tc: &TrainConfig,
) -> Result<TrainedHead<T>> {
    tc.validate()?;
    let cfg = &model.base.config;
    let mut head = model.registry.get(class)?.head.clone();
    let images = class_images(model, class, data, tc)?;
    if images.is_empty() {
        return Err(Error::NoPositives { class: class.0 });
    }
    let seed = head_seed(tc, class);
    let initial_loss = reference_loss(&head, cfg, &images, data, class, tc.mask_reduction)?;
    let mut sgd = Sgd::new(tc.momentum, tc.weight_decay);
    let mut step = 0usize;
    let mut seen_positive = false;
    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, epoch as u64])));
        for batch in order.chunks(tc.batch_size) {
            let parts: Vec<(MaskHead<T>, f64, usize)> = batch
                .par_iter()
                .map(|&k| {
                    let img = &images[k];
                    let sample = &data[img.sample];
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2, epoch as u64, k as u64]));
                    let cands = candidate_rois(cfg, tc, &sample.annotations, &img.proposals, &mut rng);
                    let rois: Vec<_> = sample_rois(label_rois(&cands, &sample.annotations, tc.positive_iou), tc, &mut rng)
                        .into_iter()
                        .filter(|r| r.class == class)
                        .collect();
                    let mut grad = head.zeros_like();
                    let mut loss = 0.0;
                    let scale = T::one() / T::from_count(rois.len().max(1));
                    for r in &rois {
                        let gt = &sample.annotations[r.gt.expect("positive")];
                        loss += roi_mask_step(&head, cfg, &img.features, &r.bbox, class, gt, tc.mask_reduction, scale, &mut grad)?;
                    }
                    Ok((grad, loss / rois.len().max(1) as f64, rois.len()))
                })
                .collect::<Result<_>>()?;
            let used: Vec<&(MaskHead<T>, f64, usize)> = parts.iter().filter(|p| p.2 > 0).collect();
            if used.is_empty() {
                continue;
            }
            seen_positive = true;
            let mut grad = head.zeros_like();
            let mut loss = 0.0;
            for p in &used {
                add_grads(&mut grad, &p.0);
                loss += p.1;
            }
            let inv = 1.0 / used.len() as f64;
            scale_grads(&mut grad, T::lit(inv));
            loss *= inv;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    stage: format!("head class {}", class.0),
                    step,
                    detail: "non-finite mask loss".into(),
                });
            }
            if let Some(clip) = tc.grad_clip {
                let n = grad_norm(&grad, |_| true);
                if n > clip {
                    scale_grads(&mut grad, T::lit(clip / n));
                }
            }
            sgd.step(&mut head, &grad, tc.lr_at(step, epoch), |_| true);
            step += 1;
        }
    }
    if !seen_positive {
        return Err(Error::NoPositives { class: class.0 });
    }
    let final_loss = reference_loss(&head, cfg, &images, data, class, tc.mask_reduction)?;
    info!("head {class}: reference mask loss {initial_loss:.4} -> {final_loss:.4} in {step} steps");
    Ok(TrainedHead {
        head: SingleClassMaskHead::new(class, head)?,
        meta: HeadMeta {
            seed,
            epochs: tc.epochs,
            steps: step,
            initial_loss,
            final_loss,
        },
    })
}

/// Trains the listed heads, each from the state in `model`, and installs
/// them. Parallel mode runs the classes concurrently on `jobs` workers.
pub fn train_all_heads<T: Scalar>(
    model: &SplitModel<T>,
    classes: &[ClassLabel],
    data: &[SceneSample],
    tc: &TrainConfig,
    mode: TrainMode,
    jobs: usize,
) -> Result<SplitModel<T>> {
    let run = |c: &ClassLabel| {
        train_class_head(model, *c, data, tc).map_err(|e| Error::ClassTraining {
            class: c.0,
            source: Box::new(e),
        })
    };
    let trained: Vec<TrainedHead<T>> = match mode {
        TrainMode::Sequential => classes.iter().map(run).collect::<Result<_>>()?,
        TrainMode::Parallel => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
            pool.install(|| classes.par_iter().map(run).collect::<Result<_>>())?
        }
    };
    let mut out = model.clone();
    for t in trained {
        out.provenance.heads.insert(t.head.class.0, t.meta);
        out.registry.replace(t.head)?;
    }
    Ok(out)
}

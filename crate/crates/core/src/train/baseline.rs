use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::derive_seed;
use super::optim::{add_grads, grad_norm, scale_grads, Sgd};
use super::sampling::{anchor_targets, candidate_rois, label_rois, sample_rois};
use crate::error::{Error, Result};
use crate::eval::evaluate_model;
use crate::geometry::{encode_box_delta, BBox};
use crate::losses::{
    cls_cross_entropy, cls_cross_entropy_grad_logits, mask_bce_grad_logits, mask_bce_logits,
    per_class_mask_loss_target, smooth_l1, smooth_l1_elem_grad, Reduction,
};
use crate::nn::ParamSet;
use crate::pipeline::{
    generate_anchors, Backbone, CheckpointRecord, FeatureMap, InferenceOptions, PipelineModel, RoiFeature,
    RoiSampler, RpnGrad,
};
use crate::scalar::{sigmoid, Scalar};
use crate::synth::{Dataset, SceneSample};
use crate::types::ClassDistribution;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub rpn_objectness: f64,
    pub rpn_box: f64,
    pub cls: f64,
    pub box_reg: f64,
    pub mask: f64,
}

impl LossComponents {
    pub fn total(&self) -> f64 {
        self.rpn_objectness + self.rpn_box + self.cls + self.box_reg + self.mask
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }

    fn add(&mut self, o: &LossComponents) {
        self.rpn_objectness += o.rpn_objectness;
        self.rpn_box += o.rpn_box;
        self.cls += o.cls;
        self.box_reg += o.box_reg;
        self.mask += o.mask;
    }

    fn scaled(&self, s: f64) -> LossComponents {
        LossComponents {
            rpn_objectness: self.rpn_objectness * s,
            rpn_box: self.rpn_box * s,
            cls: self.cls * s,
            box_reg: self.box_reg * s,
            mask: self.mask * s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub losses: LossComponents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_losses: LossComponents,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

/// Gradient and losses of one training image.
pub struct ImageStep<T> {
    pub grad: PipelineModel<T>,
    pub losses: LossComponents,
    pub positives: usize,
}

fn bce_with_logit<T: Scalar>(z: T, positive: bool) -> (f64, T) {
    let zf = z.as_f64();
    let y = if positive { 1.0 } else { 0.0 };
    let loss = zf.max(0.0) - zf * y + (-zf.abs()).exp().ln_1p();
    (loss, sigmoid(z) - T::lit(y))
}

pub(crate) fn roi_feature<T: Scalar>(fm: &FeatureMap<T>, bbox: &BBox<T>, res: usize) -> Result<(RoiSampler<T>, RoiFeature<T>)> {
    let sampler = RoiSampler::new(fm.height(), fm.width(), fm.stride, bbox, res)?;
    let feat = RoiFeature {
        data: sampler.forward(&fm.data),
        source: *bbox,
        sample_id: None,
    };
    Ok((sampler, feat))
}

/// Total-loss gradient of one image with respect to every parameter.
pub fn image_gradient<T: Scalar>(
    model: &PipelineModel<T>,
    anchors: &[BBox<T>],
    sample: &SceneSample,
    tc: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ImageStep<T>> {
    let cfg = &model.config;
    let mask_head = model.mask_head()?;
    let input = Backbone::image_tensor(cfg, &sample.image)?;
    let (fm, cache) = model.backbone.forward_cached(input);
    let mut grad = model.zeros_like();
    let mut grad_fm = fm.data.zeros_like();
    let mut losses = LossComponents::default();
    let gts = &sample.annotations;

    let out = model.rpn.forward(&fm);
    let targets = anchor_targets(cfg, tc, anchors, gts, rng);
    let n_anchor = T::from_count(targets.len().max(1));
    let mut rg = RpnGrad::zeros_for(&out);
    for t in &targets {
        let (l, g) = bce_with_logit(out.logit(t.index), t.positive);
        losses.rpn_objectness += l / n_anchor.as_f64();
        rg.add_logit(t.index, g / n_anchor);
        if let Some(target) = t.target {
            let pred = out.delta(t.index);
            let diff: [T; 4] = std::array::from_fn(|k| pred[k] - target[k]);
            losses.rpn_box += smooth_l1(&diff, Reduction::Sum)?.value.as_f64() / n_anchor.as_f64();
            rg.add_delta(t.index, diff.map(|d| smooth_l1_elem_grad(d) / n_anchor));
        }
    }
    grad_fm.add_assign(&model.rpn.backward(&fm, &out, &rg, &mut grad.rpn));

    let learned: Vec<BBox<T>> = if tc.learned_proposals > 0 {
        model
            .rpn
            .propose(cfg, anchors, &fm, tc.learned_proposals)?
            .into_iter()
            .map(|p| p.bbox)
            .collect()
    } else {
        Vec::new()
    };
    let cands = candidate_rois(cfg, tc, gts, &learned, rng);
    let rois = sample_rois(label_rois(&cands, gts, tc.positive_iou), tc, rng);
    let n_roi = T::from_count(rois.len().max(1));
    let positives = rois.iter().filter(|r| r.gt.is_some()).count();
    let n_pos = T::from_count(positives.max(1));
    let weights = cfg.box_weights;
    for roi in &rois {
        let (s7, feat) = roi_feature(&fm, &roi.bbox, cfg.box_resolution)?;
        let (logits, cc) = model.cls.forward_cached(&feat)?;
        let dist = ClassDistribution::from_logits(&logits);
        losses.cls += cls_cross_entropy(&dist, roi.class)?.value.as_f64() / n_roi.as_f64();
        let g: Vec<T> = cls_cross_entropy_grad_logits(&dist, roi.class)
            .into_iter()
            .map(|v| v / n_roi)
            .collect();
        let mut g_roi = model.cls.backward(&feat, &cc, &g, &mut grad.cls, true).expect("input grad");
        if let Some(gi) = roi.gt {
            let gt = &gts[gi];
            let (raw, bc) = model.bbox.forward_cached(&feat)?;
            let d = encode_box_delta(&gt.bbox.cast::<T>(), &roi.bbox)?.as_array();
            let o = 4 * (roi.class.index() - 1);
            let diff: [T; 4] = std::array::from_fn(|k| raw[o + k] - d[k] * T::lit(weights[k]));
            losses.box_reg += smooth_l1(&diff, Reduction::Sum)?.value.as_f64() / n_roi.as_f64();
            let mut gb = vec![T::zero(); raw.len()];
            for k in 0..4 {
                gb[o + k] = smooth_l1_elem_grad(diff[k]) / n_roi;
            }
            let g2 = model.bbox.backward(&feat, &bc, &gb, &mut grad.bbox, true).expect("input grad");
            g_roi.add_assign(&g2);

            let (s14, feat14) = roi_feature(&fm, &roi.bbox, cfg.mask_roi_resolution)?;
            let (mlogits, mc) = mask_head.forward_cached(&feat14)?;
            let target = per_class_mask_loss_target(&roi.bbox, roi.class, gt, cfg.mask_resolution)?;
            let ch = roi.class.index() - 1;
            let plane = crate::pipeline::MaskHead::plane(&mlogits, ch);
            losses.mask += mask_bce_logits(&plane.logits, &target, tc.mask_reduction)?.value.as_f64() / n_pos.as_f64();
            let gplane = mask_bce_grad_logits(&plane.logits, &target, tc.mask_reduction);
            let mut gl = mlogits.zeros_like();
            let m2 = plane.logits.len();
            for (dst, &v) in gl.data[ch * m2..(ch + 1) * m2].iter_mut().zip(&gplane) {
                *dst = v / n_pos;
            }
            let mask_grad = grad.mask.as_mut().expect("gradient mirrors model");
            let g14 = mask_head.backward(&feat14, &mc, &gl, mask_grad, true).expect("input grad");
            s14.backward(&g14, &mut grad_fm);
        }
        s7.backward(&g_roi, &mut grad_fm);
    }
    model.backbone.backward(&cache, &grad_fm, &mut grad.backbone);
    Ok(ImageStep {
        grad,
        losses,
        positives,
    })
}

/// Result of [`train_baseline`].
pub struct BaselineRun<T> {
    pub model: PipelineModel<T>,
    pub record: CheckpointRecord,
    pub log: TrainLog,
    /// Epoch (1-based count) at which the plateau rule fired.
    pub plateau_epoch: Option<usize>,
}

fn all_finite<T: Scalar>(grad: &PipelineModel<T>) -> bool {
    grad.named_params("").iter().all(|(_, t)| t.is_finite())
}

/// Trains every sub-head jointly until the plateau rule fires on the
/// validation mask AP or the epoch cap is reached.
pub fn train_baseline<T: Scalar>(
    mut model: PipelineModel<T>,
    train: &[SceneSample],
    val: Option<(&Dataset, &str)>,
    tc: &TrainConfig,
) -> Result<BaselineRun<T>> {
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split has no samples".into()));
    }
    model.mask_head()?;
    let anchors = generate_anchors::<T>(&model.config);
    let mut sgd = Sgd::new(tc.momentum, tc.weight_decay);
    let mut log = TrainLog::default();
    let mut history = Vec::new();
    let mut plateau_epoch = None;
    let mut step = 0usize;
    let mut epochs_run = 0;
    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, &[1, epoch as u64])));
        let mut epoch_losses = LossComponents::default();
        let mut batches = 0usize;
        for batch in order.chunks(tc.batch_size) {
            let steps: Vec<ImageStep<T>> = batch
                .par_iter()
                .map(|&i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, &[2, epoch as u64, i as u64]));
                    image_gradient(&model, &anchors, &train[i], tc, &mut rng)
                })
                .collect::<Result<_>>()?;
            let mut grad = model.zeros_like();
            let mut losses = LossComponents::default();
            for s in &steps {
                add_grads(&mut grad, &s.grad);
                losses.add(&s.losses);
            }
            let inv = 1.0 / steps.len() as f64;
            scale_grads(&mut grad, T::lit(inv));
            let losses = losses.scaled(inv);
            if !losses.is_finite() || !all_finite(&grad) {
                return Err(Error::Divergence {
                    stage: "baseline".into(),
                    step,
                    detail: format!("non-finite loss or gradient ({losses:?})"),
                });
            }
            if let Some(clip) = tc.grad_clip {
                let n = grad_norm(&grad, |_| true);
                if n > clip {
                    scale_grads(&mut grad, T::lit(clip / n));
                }
            }
            let lr = tc.lr_at(step, epoch);
            sgd.step(&mut model, &grad, lr, |_| true);
            log.steps.push(StepLog {
                epoch,
                step,
                lr,
                losses,
            });
            epoch_losses.add(&losses);
            batches += 1;
            step += 1;
        }
        epochs_run = epoch + 1;
        let mean_losses = epoch_losses.scaled(1.0 / batches.max(1) as f64);
        let mut val_metric = None;
        if let Some((ds, digest)) = val {
            if tc.eval_every > 0 && epochs_run % tc.eval_every == 0 {
                let side = evaluate_model(&model, "baseline", "", ds, digest, &InferenceOptions::default())?;
                let m = side.mean_ap().unwrap_or(0.0);
                history.push(m);
                val_metric = Some(m);
            }
        }
        info!(
            "baseline epoch {epochs_run}: loss {:.4} (mask {:.4}) val {:?}",
            mean_losses.total(),
            mean_losses.mask,
            val_metric
        );
        log.epochs.push(EpochLog {
            epoch,
            mean_losses,
            val_metric,
        });
        if val_metric.is_some() && tc.plateau.reached(&history) {
            plateau_epoch = Some(epochs_run);
            break;
        }
    }
    let mut record = model.to_checkpoint()?;
    record.header.epoch = epochs_run;
    record.header.metric_history = history;
    record.header.train_config = Some(serde_json::to_value(tc)?);
    Ok(BaselineRun {
        model,
        record,
        log,
        plateau_epoch,
    })
}

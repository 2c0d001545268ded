use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::baseline::{roi_feature, StepLog, LossComponents};
use super::config::TrainConfig;
use super::derive_seed;
use super::optim::{add_grads, grad_norm, scale_grads, Sgd};
use super::sampling::{candidate_rois, label_rois, sample_rois};
use crate::error::{Error, Result};
use crate::geometry::{encode_box_delta, BBox};
use crate::losses::{cls_cross_entropy, cls_cross_entropy_grad_logits, smooth_l1, smooth_l1_elem_grad, Reduction};
use crate::nn::{join, ParamSet};
use crate::pipeline::{class_deltas, generate_anchors, refine_box, FcHead, FeatureMap};
use crate::scalar::Scalar;
use crate::split::{foreground_argmax, CascadeModel};
use crate::synth::SceneSample;
use crate::types::ClassDistribution;

/// Classifier and regressor of one stage, trained together.
#[derive(Clone)]
struct StageHeads<T> {
    cls: FcHead<T>,
    bbox: FcHead<T>,
}

impl<T: Scalar> ParamSet<T> for StageHeads<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a crate::nn::Tensor<T>)>) {
        self.cls.visit(&join(prefix, "cls"), out);
        self.bbox.visit(&join(prefix, "box"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut crate::nn::Tensor<T>)>) {
        self.cls.visit_mut(&join(prefix, "cls"), out);
        self.bbox.visit_mut(&join(prefix, "box"), out);
    }
}

/// Boxes after stages `0..t` for one candidate; `None` if one collapses.
fn refine_through<T: Scalar>(model: &CascadeModel<T>, fm: &FeatureMap<T>, b: &BBox<T>, t: usize) -> Result<Option<BBox<T>>> {
    let cfg = &model.first.base.config;
    let mut cur = *b;
    for s in 0..t {
        let (cls, bbox) = model.stage_heads(s);
        let (_, feat) = roi_feature(fm, &cur, cfg.box_resolution)?;
        let fg = foreground_argmax(&cls.classify(&feat)?);
        let raw = bbox.forward(&feat)?;
        match refine_box(class_deltas(&raw, fg), cfg.box_weights, &cur, cfg.image_width, cfg.image_height) {
            Some(n) => cur = n,
            None => return Ok(None),
        }
    }
    Ok(Some(cur))
}

/// Trains the classifier and regressor of every stage after the first, in
/// order. Stage `t` sees candidates refined by stages `0..t` and labels them
/// at its own IoU threshold. Everything else stays frozen.
pub fn train_cascade_stages<T: Scalar>(
    model: &mut CascadeModel<T>,
    data: &[SceneSample],
    tc: &TrainConfig,
) -> Result<Vec<StepLog>> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("no samples for cascade training".into()));
    }
    let cfg = model.first.base.config.clone();
    let anchors = generate_anchors::<T>(&cfg);
    let cached: Vec<(FeatureMap<T>, Vec<BBox<T>>)> = data
        .par_iter()
        .map(|s| {
            let fm = model.first.base.features(&s.image)?;
            let props = model
                .first
                .base
                .rpn
                .propose(&cfg, &anchors, &fm, tc.learned_proposals.max(1))?
                .into_iter()
                .map(|p| p.bbox)
                .collect();
            Ok((fm, props))
        })
        .collect::<Result<_>>()?;
    let mut log = Vec::new();
    let weights = cfg.box_weights;
    for t in 1..model.num_stages() {
        let iou = model.stages[t - 1].iou_threshold;
        let stage_tc = TrainConfig {
            positive_iou: iou,
            ..tc.clone()
        };
        let mut heads = StageHeads {
            cls: model.stages[t - 1].cls.clone(),
            bbox: model.stages[t - 1].bbox.clone(),
        };
        let mut sgd = Sgd::new(tc.momentum, tc.weight_decay);
        let mut step = 0usize;
        let seed = derive_seed(tc.seed, &[0x6361_7363, t as u64]);
        for epoch in 0..tc.epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, epoch as u64])));
            for batch in order.chunks(tc.batch_size) {
                let frozen: &CascadeModel<T> = model;
                let parts: Vec<(StageHeads<T>, LossComponents)> = batch
                    .par_iter()
                    .map(|&i| {
                        let (fm, props) = &cached[i];
                        let gts = &data[i].annotations;
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2, epoch as u64, i as u64]));
                        let cands = candidate_rois(&cfg, &stage_tc, gts, props, &mut rng);
                        let mut refined = Vec::with_capacity(cands.len());
                        for c in &cands {
                            if let Some(b) = refine_through(frozen, fm, c, t)? {
                                refined.push(b);
                            }
                        }
                        let rois = sample_rois(label_rois(&refined, gts, iou), &stage_tc, &mut rng);
                        let n = T::from_count(rois.len().max(1));
                        let mut grad = StageHeads {
                            cls: heads.cls.zeros_like(),
                            bbox: heads.bbox.zeros_like(),
                        };
                        let mut losses = LossComponents::default();
                        for r in &rois {
                            let (_, feat) = roi_feature(fm, &r.bbox, cfg.box_resolution)?;
                            let (logits, cc) = heads.cls.forward_cached(&feat)?;
                            let dist = ClassDistribution::from_logits(&logits);
                            losses.cls += cls_cross_entropy(&dist, r.class)?.value.as_f64() / n.as_f64();
                            let g: Vec<T> = cls_cross_entropy_grad_logits(&dist, r.class).into_iter().map(|v| v / n).collect();
                            heads.cls.backward(&feat, &cc, &g, &mut grad.cls, false);
                            if let Some(gi) = r.gt {
                                let (raw, bc) = heads.bbox.forward_cached(&feat)?;
                                let d = encode_box_delta(&gts[gi].bbox.cast::<T>(), &r.bbox)?.as_array();
                                let o = 4 * (r.class.index() - 1);
                                let diff: [T; 4] = std::array::from_fn(|k| raw[o + k] - d[k] * T::lit(weights[k]));
                                losses.box_reg += smooth_l1(&diff, Reduction::Sum)?.value.as_f64() / n.as_f64();
                                let mut gb = vec![T::zero(); raw.len()];
                                for k in 0..4 {
                                    gb[o + k] = smooth_l1_elem_grad(diff[k]) / n;
                                }
                                heads.bbox.backward(&feat, &bc, &gb, &mut grad.bbox, false);
                            }
                        }
                        Ok((grad, losses))
                    })
                    .collect::<Result<_>>()?;
                let mut grad = StageHeads {
                    cls: heads.cls.zeros_like(),
                    bbox: heads.bbox.zeros_like(),
                };
                let mut losses = LossComponents::default();
                for (g, l) in &parts {
                    add_grads(&mut grad, g);
                    losses.cls += l.cls;
                    losses.box_reg += l.box_reg;
                }
                let inv = 1.0 / parts.len() as f64;
                scale_grads(&mut grad, T::lit(inv));
                losses.cls *= inv;
                losses.box_reg *= inv;
                if !losses.is_finite() {
                    return Err(Error::Divergence {
                        stage: format!("cascade stage {}", t + 1),
                        step,
                        detail: "non-finite loss".into(),
                    });
                }
                if let Some(clip) = tc.grad_clip {
                    let nrm = grad_norm(&grad, |_| true);
                    if nrm > clip {
                        scale_grads(&mut grad, T::lit(clip / nrm));
                    }
                }
                let lr = tc.lr_at(step, epoch);
                sgd.step(&mut heads, &grad, lr, |_| true);
                log.push(StepLog { epoch, step, lr, losses });
                step += 1;
            }
        }
        model.stages[t - 1].cls = heads.cls;
        model.stages[t - 1].bbox = heads.bbox;
    }
    Ok(log)
}

use super::baseline::roi_feature;
use crate::error::Result;
use crate::geometry::BBox;
use crate::losses::{mask_bce_grad_logits, mask_bce_logits, per_class_mask_loss_target, Reduction};
use crate::pipeline::Backbone;
use crate::scalar::Scalar;
use crate::split::SplitModel;
use crate::synth::{Image, InstanceAnnotation};
use crate::types::ClassLabel;

/// Mask loss of the head of `class` on one ROI and its gradient with
/// respect to every parameter of the split model.
///
/// With `detach_base` the ROI features are treated as constants, as they are
/// during head training; otherwise the gradient also flows back through ROI
/// alignment into the backbone.
pub fn split_mask_loss_gradient<T: Scalar>(
    model: &SplitModel<T>,
    image: &Image,
    roi: &BBox<T>,
    class: ClassLabel,
    gt: &InstanceAnnotation,
    reduction: Reduction,
    detach_base: bool,
) -> Result<(f64, SplitModel<T>)> {
    let cfg = &model.base.config;
    let head = &model.registry.get(class)?.head;
    let input = Backbone::image_tensor(cfg, image)?;
    let (fm, cache) = model.base.backbone.forward_cached(input);
    let (sampler, feat) = roi_feature(&fm, roi, cfg.mask_roi_resolution)?;
    let (logits, mc) = head.forward_cached(&feat)?;
    let target = per_class_mask_loss_target(roi, class, gt, cfg.mask_resolution)?;
    let loss = mask_bce_logits(&logits.data, &target, reduction)?.value.as_f64();
    let mut g = logits.zeros_like();
    g.data = mask_bce_grad_logits(&logits.data, &target, reduction);
    let mut grad = model.zeros_like();
    let head_grad = &mut grad.registry.get_mut(class)?.head;
    if let Some(g_roi) = head.backward(&feat, &mc, &g, head_grad, !detach_base) {
        let mut grad_fm = fm.data.zeros_like();
        sampler.backward(&g_roi, &mut grad_fm);
        model.base.backbone.backward(&cache, &grad_fm, &mut grad.base.backbone);
    }
    Ok((loss, grad))
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture and inference constants of the miniature detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub num_classes: usize,
    /// Output channels of the three backbone convolutions.
    pub backbone_channels: [usize; 3],
    pub roi_hidden: usize,
    pub mask_channels: usize,
    pub box_resolution: usize,
    pub mask_roi_resolution: usize,
    pub mask_resolution: usize,
    pub anchor_sizes: Vec<f64>,
    /// Height-to-width ratios.
    pub anchor_ratios: Vec<f64>,
    /// Scale applied to `(dx, dy, dw, dh)` regression targets.
    pub box_weights: [f64; 4],
    pub rpn_pre_nms: usize,
    pub rpn_nms_iou: f64,
    pub det_nms_iou: f64,
    pub mask_threshold: f64,
    pub init_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            image_height: 128,
            image_width: 128,
            num_classes: 5,
            backbone_channels: [8, 16, 16],
            roi_hidden: 64,
            mask_channels: 8,
            box_resolution: 7,
            mask_roi_resolution: 14,
            mask_resolution: 28,
            anchor_sizes: vec![8.0, 16.0, 32.0, 64.0],
            anchor_ratios: vec![0.5, 1.0, 2.0],
            box_weights: [10.0, 10.0, 5.0, 5.0],
            rpn_pre_nms: 600,
            rpn_nms_iou: 0.7,
            det_nms_iou: 0.5,
            mask_threshold: 0.5,
            init_seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Total backbone stride (two stride-2 convolutions).
    pub const STRIDE: usize = 4;

    pub fn stride(&self) -> usize {
        Self::STRIDE
    }

    pub fn feature_size(&self) -> (usize, usize) {
        (self.image_height / Self::STRIDE, self.image_width / Self::STRIDE)
    }

    pub fn feature_channels(&self) -> usize {
        self.backbone_channels[2]
    }

    pub fn anchors_per_location(&self) -> usize {
        self.anchor_sizes.len() * self.anchor_ratios.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::IncompatibleModel("num_classes must be >= 1".into()));
        }
        if !self.image_height.is_multiple_of(Self::STRIDE) || !self.image_width.is_multiple_of(Self::STRIDE) {
            return Err(Error::IncompatibleModel(format!(
                "stride {} must divide the {}x{} image",
                Self::STRIDE,
                self.image_height,
                self.image_width
            )));
        }
        if self.mask_resolution != 2 * self.mask_roi_resolution {
            return Err(Error::IncompatibleModel(
                "mask resolution must be twice the mask ROI resolution".into(),
            ));
        }
        if self.anchor_sizes.is_empty() || self.anchor_ratios.is_empty() {
            return Err(Error::IncompatibleModel("anchor set is empty".into()));
        }
        Ok(())
    }
}

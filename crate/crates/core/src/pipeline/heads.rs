//! Per-ROI heads: classification, class-specific box regression, and the
//! convolutional mask head (multi-class or single-class).

use rand::Rng;

use super::config::PipelineConfig;
use super::roi_align::RoiFeature;
use crate::error::{Error, Result};
use crate::mask::MaskLogits;
use crate::nn::{join, relu_backward_inplace, relu_inplace, Conv2d, Deconv2x2, Linear, ParamSet, Tensor};
use crate::scalar::Scalar;
use crate::types::ClassDistribution;

fn check_resolution<T: Scalar>(roi: &RoiFeature<T>, expected: usize, channels: usize) -> Result<()> {
    if roi.resolution() != expected || roi.data.shape[0] != channels {
        return Err(Error::DimensionMismatch(format!(
            "ROI feature {:?}, head expects [{channels}, {expected}, {expected}]",
            roi.data.shape
        )));
    }
    Ok(())
}

/// Two-layer perceptron over a flattened `7x7xC` ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct FcHead<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    resolution: usize,
    channels: usize,
}

pub struct FcCache<T> {
    hidden: Vec<T>,
}

impl<T: Scalar> FcHead<T> {
    fn new(channels: usize, resolution: usize, hidden: usize, outputs: usize) -> Self {
        FcHead {
            fc1: Linear::new(channels * resolution * resolution, hidden),
            fc2: Linear::new(hidden, outputs),
            resolution,
            channels,
        }
    }

    /// Classification head with `N + 1` outputs.
    pub fn classifier(cfg: &PipelineConfig) -> Self {
        Self::new(cfg.feature_channels(), cfg.box_resolution, cfg.roi_hidden, cfg.num_classes + 1)
    }

    /// Box head with `4N` outputs (one delta per foreground class).
    pub fn regressor(cfg: &PipelineConfig) -> Self {
        Self::new(cfg.feature_channels(), cfg.box_resolution, cfg.roi_hidden, 4 * cfg.num_classes)
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R, out_std: f64) {
        self.fc1.init(rng);
        self.fc2.init_scaled(rng, out_std);
    }

    pub fn zeros_like(&self) -> Self {
        FcHead {
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
            resolution: self.resolution,
            channels: self.channels,
        }
    }

    pub fn outputs(&self) -> usize {
        self.fc2.out_features()
    }

    pub fn forward_cached(&self, roi: &RoiFeature<T>) -> Result<(Vec<T>, FcCache<T>)> {
        check_resolution(roi, self.resolution, self.channels)?;
        let mut hidden = self.fc1.forward(&roi.data.data);
        relu_inplace(&mut hidden);
        let out = self.fc2.forward(&hidden);
        Ok((out, FcCache { hidden }))
    }

    pub fn forward(&self, roi: &RoiFeature<T>) -> Result<Vec<T>> {
        Ok(self.forward_cached(roi)?.0)
    }

    /// Returns the gradient with respect to the ROI feature when requested.
    pub fn backward(
        &self,
        roi: &RoiFeature<T>,
        cache: &FcCache<T>,
        grad_out: &[T],
        grad: &mut FcHead<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let mut gh = self.fc2.backward(&cache.hidden, grad_out, &mut grad.fc2, true).unwrap();
        relu_backward_inplace(&cache.hidden, &mut gh);
        self.fc1
            .backward(&roi.data.data, &gh, &mut grad.fc1, need_input_grad)
            .map(|g| Tensor::from_vec(&roi.data.shape, g))
    }

    pub fn classify(&self, roi: &RoiFeature<T>) -> Result<ClassDistribution<T>> {
        Ok(ClassDistribution::from_logits(&self.forward(roi)?))
    }
}

impl<T: Scalar> ParamSet<T> for FcHead<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.fc1.visit(&join(prefix, "fc1"), out);
        self.fc2.visit(&join(prefix, "fc2"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.fc1.visit_mut(&join(prefix, "fc1"), out);
        self.fc2.visit_mut(&join(prefix, "fc2"), out);
    }
}

/// `conv3x3 -> conv3x3 -> deconv2x2 -> conv1x1`, mapping a `14x14xC` ROI to
/// `K` planes of `28x28` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHead<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub up: Deconv2x2<T>,
    pub predictor: Conv2d<T>,
    roi_resolution: usize,
}

pub struct MaskCache<T> {
    a1: Tensor<T>,
    a2: Tensor<T>,
    a3: Tensor<T>,
}

impl<T: Scalar> MaskHead<T> {
    pub fn new(cfg: &PipelineConfig, outputs: usize) -> Self {
        let (c, m) = (cfg.feature_channels(), cfg.mask_channels);
        MaskHead {
            conv1: Conv2d::new(c, m, 3, 1, 1),
            conv2: Conv2d::new(m, m, 3, 1, 1),
            up: Deconv2x2::new(m, m),
            predictor: Conv2d::new(m, outputs, 1, 1, 0),
            roi_resolution: cfg.mask_roi_resolution,
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.conv1.init(rng);
        self.conv2.init(rng);
        self.up.init(rng);
        self.predictor.init(rng);
        self.predictor.weight.scale(T::lit(0.1));
    }

    pub fn zeros_like(&self) -> Self {
        MaskHead {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            up: self.up.zeros_like(),
            predictor: self.predictor.zeros_like(),
            roi_resolution: self.roi_resolution,
        }
    }

    pub fn outputs(&self) -> usize {
        self.predictor.out_channels()
    }

    pub fn output_resolution(&self) -> usize {
        2 * self.roi_resolution
    }

    /// Copies every shared layer and keeps only output channel `channel` of
    /// the predictor.
    pub fn slice_channel(&self, channel: usize) -> Result<Self> {
        if channel >= self.outputs() {
            return Err(Error::InvalidClass(format!(
                "channel {channel} outside a {}-channel mask head",
                self.outputs()
            )));
        }
        let mut head = self.clone();
        let cin = self.predictor.in_channels();
        head.predictor = Conv2d::new(cin, 1, 1, 1, 0);
        head.predictor
            .weight
            .data
            .copy_from_slice(&self.predictor.weight.data[channel * cin..(channel + 1) * cin]);
        head.predictor.bias.data[0] = self.predictor.bias.data[channel];
        Ok(head)
    }

    pub fn forward_cached(&self, roi: &RoiFeature<T>) -> Result<(Tensor<T>, MaskCache<T>)> {
        check_resolution(roi, self.roi_resolution, self.conv1.in_channels())?;
        let mut a1 = self.conv1.forward(&roi.data);
        relu_inplace(&mut a1.data);
        let mut a2 = self.conv2.forward(&a1);
        relu_inplace(&mut a2.data);
        let mut a3 = self.up.forward(&a2);
        relu_inplace(&mut a3.data);
        let logits = self.predictor.forward(&a3);
        Ok((logits, MaskCache { a1, a2, a3 }))
    }

    /// All `K` logit planes, `[K, 28, 28]`.
    pub fn forward(&self, roi: &RoiFeature<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(roi)?.0)
    }

    /// One plane of the output.
    pub fn plane(logits: &Tensor<T>, channel: usize) -> MaskLogits<T> {
        let (h, w) = (logits.shape[1], logits.shape[2]);
        MaskLogits {
            size: h,
            logits: logits.data[channel * h * w..(channel + 1) * h * w].to_vec(),
        }
    }

    pub fn backward(
        &self,
        roi: &RoiFeature<T>,
        cache: &MaskCache<T>,
        grad_logits: &Tensor<T>,
        grad: &mut MaskHead<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let mut g3 = self.predictor.backward(&cache.a3, grad_logits, &mut grad.predictor, true).unwrap();
        relu_backward_inplace(&cache.a3.data, &mut g3.data);
        let mut g2 = self.up.backward(&cache.a2, &g3, &mut grad.up, true).unwrap();
        relu_backward_inplace(&cache.a2.data, &mut g2.data);
        let mut g1 = self.conv2.backward(&cache.a1, &g2, &mut grad.conv2, true).unwrap();
        relu_backward_inplace(&cache.a1.data, &mut g1.data);
        self.conv1.backward(&roi.data, &g1, &mut grad.conv1, need_input_grad)
    }
}

impl<T: Scalar> ParamSet<T> for MaskHead<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.conv1.visit(&join(prefix, "conv1"), out);
        self.conv2.visit(&join(prefix, "conv2"), out);
        self.up.visit(&join(prefix, "up"), out);
        self.predictor.visit(&join(prefix, "predictor"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.conv1.visit_mut(&join(prefix, "conv1"), out);
        self.conv2.visit_mut(&join(prefix, "conv2"), out);
        self.up.visit_mut(&join(prefix, "up"), out);
        self.predictor.visit_mut(&join(prefix, "predictor"), out);
    }
}

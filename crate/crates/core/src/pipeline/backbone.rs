use rand::Rng;

use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::nn::{join, relu_backward_inplace, relu_inplace, Conv2d, ParamSet, Tensor};
use crate::scalar::Scalar;
use crate::synth::Image;

/// `[C, H/stride, W/stride]` activations.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub data: Tensor<T>,
    pub stride: usize,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn channels(&self) -> usize {
        self.data.shape[0]
    }

    pub fn height(&self) -> usize {
        self.data.shape[1]
    }

    pub fn width(&self) -> usize {
        self.data.shape[2]
    }

    /// Image-space extent covered by the map.
    pub fn image_size(&self) -> (usize, usize) {
        (self.height() * self.stride, self.width() * self.stride)
    }
}

/// Three-layer convolutional feature extractor with overall stride 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
}

/// Activations kept for the backward pass.
pub struct BackboneCache<T> {
    input: Tensor<T>,
    a1: Tensor<T>,
    a2: Tensor<T>,
    a3: Tensor<T>,
}

impl<T: Scalar> Backbone<T> {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let [c1, c2, c3] = cfg.backbone_channels;
        Backbone {
            conv1: Conv2d::new(3, c1, 3, 2, 1),
            conv2: Conv2d::new(c1, c2, 3, 2, 1),
            conv3: Conv2d::new(c2, c3, 3, 1, 1),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.conv1.init(rng);
        self.conv2.init(rng);
        self.conv3.init(rng);
    }

    pub fn zeros_like(&self) -> Self {
        Backbone {
            conv1: self.conv1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            conv3: self.conv3.zeros_like(),
        }
    }

    pub fn image_tensor(cfg: &PipelineConfig, image: &Image) -> Result<Tensor<T>> {
        if image.height != cfg.image_height || image.width != cfg.image_width || image.channels != 3 {
            return Err(Error::DimensionMismatch(format!(
                "image {}x{}x{} but model expects {}x{}x3",
                image.height, image.width, image.channels, cfg.image_height, cfg.image_width
            )));
        }
        let planar = image.to_planar();
        Ok(Tensor::from_vec(
            &[3, image.height, image.width],
            planar.into_iter().map(T::from_single).collect(),
        ))
    }

    pub fn forward_cached(&self, input: Tensor<T>) -> (FeatureMap<T>, BackboneCache<T>) {
        let mut a1 = self.conv1.forward(&input);
        relu_inplace(&mut a1.data);
        let mut a2 = self.conv2.forward(&a1);
        relu_inplace(&mut a2.data);
        let mut a3 = self.conv3.forward(&a2);
        relu_inplace(&mut a3.data);
        let fm = FeatureMap {
            data: a3.clone(),
            stride: PipelineConfig::STRIDE,
        };
        (fm, BackboneCache { input, a1, a2, a3 })
    }

    pub fn forward(&self, cfg: &PipelineConfig, image: &Image) -> Result<FeatureMap<T>> {
        let input = Self::image_tensor(cfg, image)?;
        Ok(self.forward_cached(input).0)
    }

    /// Backpropagates a feature-map gradient into `grad`.
    pub fn backward(&self, cache: &BackboneCache<T>, grad_features: &Tensor<T>, grad: &mut Backbone<T>) {
        let mut g3 = grad_features.clone();
        relu_backward_inplace(&cache.a3.data, &mut g3.data);
        let mut g2 = self.conv3.backward(&cache.a2, &g3, &mut grad.conv3, true).unwrap();
        relu_backward_inplace(&cache.a2.data, &mut g2.data);
        let mut g1 = self.conv2.backward(&cache.a1, &g2, &mut grad.conv2, true).unwrap();
        relu_backward_inplace(&cache.a1.data, &mut g1.data);
        self.conv1.backward(&cache.input, &g1, &mut grad.conv1, false);
    }
}

impl<T: Scalar> ParamSet<T> for Backbone<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.conv1.visit(&join(prefix, "conv1"), out);
        self.conv2.visit(&join(prefix, "conv2"), out);
        self.conv3.visit(&join(prefix, "conv3"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.conv1.visit_mut(&join(prefix, "conv1"), out);
        self.conv2.visit_mut(&join(prefix, "conv2"), out);
        self.conv3.visit_mut(&join(prefix, "conv3"), out);
    }
}

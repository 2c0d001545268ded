use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backbone::Backbone;
use super::config::PipelineConfig;
use super::heads::{FcHead, MaskHead};
use super::proposals::RpnHead;
use crate::error::{Error, Result};
use crate::nn::{join, ParamSet, Tensor};
use crate::scalar::Scalar;
use crate::types::ClassCatalog;

/// Sub-head that owns a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubHead {
    Backbone,
    Proposal,
    Cls,
    Box,
    Mask,
}

impl SubHead {
    pub const ALL: [SubHead; 5] = [SubHead::Backbone, SubHead::Proposal, SubHead::Cls, SubHead::Box, SubHead::Mask];

    pub fn prefix(self) -> &'static str {
        match self {
            SubHead::Backbone => "backbone",
            SubHead::Proposal => "proposal",
            SubHead::Cls => "cls",
            SubHead::Box => "box",
            SubHead::Mask => "mask",
        }
    }

    /// Owner of a hierarchical parameter name. Registry heads and cascade
    /// stages map onto the sub-head they specialize.
    pub fn of(name: &str) -> Option<SubHead> {
        let mut parts = name.split('/');
        let first = parts.next()?;
        match first {
            "backbone" => Some(SubHead::Backbone),
            "proposal" => Some(SubHead::Proposal),
            "cls" => Some(SubHead::Cls),
            "box" => Some(SubHead::Box),
            "mask" | "registry" => Some(SubHead::Mask),
            s if s.starts_with("stage") => match parts.next()? {
                "cls" => Some(SubHead::Cls),
                "box" => Some(SubHead::Box),
                "registry" => Some(SubHead::Mask),
                _ => None,
            },
            _ => None,
        }
    }
}

/// The two-stage detector with a shared multi-class mask head.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel<T> {
    pub config: PipelineConfig,
    pub catalog: ClassCatalog,
    pub backbone: Backbone<T>,
    pub rpn: RpnHead<T>,
    pub cls: FcHead<T>,
    pub bbox: FcHead<T>,
    /// `None` once the multi-class mask head has been removed.
    pub mask: Option<MaskHead<T>>,
}

impl<T: Scalar> PipelineModel<T> {
    /// All parameters zero.
    pub fn zeros(config: PipelineConfig, catalog: ClassCatalog) -> Result<Self> {
        config.validate()?;
        if catalog.len() != config.num_classes {
            return Err(Error::IncompatibleModel(format!(
                "catalog has {} classes, config {}",
                catalog.len(),
                config.num_classes
            )));
        }
        Ok(PipelineModel {
            backbone: Backbone::new(&config),
            rpn: RpnHead::new(&config),
            cls: FcHead::classifier(&config),
            bbox: FcHead::regressor(&config),
            mask: Some(MaskHead::new(&config, config.num_classes)),
            config,
            catalog,
        })
    }

    /// Randomly initialized from `config.init_seed`.
    pub fn initialized(config: PipelineConfig, catalog: ClassCatalog) -> Result<Self> {
        let mut m = Self::zeros(config, catalog)?;
        let mut rng = ChaCha8Rng::seed_from_u64(m.config.init_seed);
        m.backbone.init(&mut rng);
        m.rpn.init(&mut rng);
        m.cls.init(&mut rng, 0.01);
        m.bbox.init(&mut rng, 0.001);
        if let Some(mask) = m.mask.as_mut() {
            mask.init(&mut rng);
        }
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        PipelineModel {
            config: self.config.clone(),
            catalog: self.catalog.clone(),
            backbone: self.backbone.zeros_like(),
            rpn: self.rpn.zeros_like(),
            cls: self.cls.zeros_like(),
            bbox: self.bbox.zeros_like(),
            mask: self.mask.as_ref().map(MaskHead::zeros_like),
        }
    }

    pub fn mask_head(&self) -> Result<&MaskHead<T>> {
        self.mask
            .as_ref()
            .ok_or_else(|| Error::IncompatibleModel("model has no multi-class mask head".into()))
    }
}

impl<T: Scalar> ParamSet<T> for PipelineModel<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.backbone.visit(&join(prefix, "backbone"), out);
        self.rpn.visit(&join(prefix, "proposal"), out);
        self.cls.visit(&join(prefix, "cls"), out);
        self.bbox.visit(&join(prefix, "box"), out);
        if let Some(m) = &self.mask {
            m.visit(&join(prefix, "mask"), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.backbone.visit_mut(&join(prefix, "backbone"), out);
        self.rpn.visit_mut(&join(prefix, "proposal"), out);
        self.cls.visit_mut(&join(prefix, "cls"), out);
        self.bbox.visit_mut(&join(prefix, "box"), out);
        if let Some(m) = self.mask.as_mut() {
            m.visit_mut(&join(prefix, "mask"), out);
        }
    }
}

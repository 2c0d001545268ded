//! Deterministic synthetic scenes with per-instance class, box, and mask
//! ground truth, plus their on-disk interchange formats.

mod generator;
mod io;
mod split;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mask::BinaryMask;
use crate::types::{ClassCatalog, ClassLabel};

pub use generator::{class_weights, generate_split, sample_plan, sample_seed, DatasetSpec, Shape, Split};
pub use io::{
    dataset_digest, load_dataset, read_annotations, read_image, save_dataset, write_annotations, write_image,
    ANNOTATION_VERSION, IMAGE_MAGIC, IMAGE_VERSION,
};
pub use split::{split_validation_per_class, ClassSubset};

/// Interleaved `H x W x C` intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Channel-major copy `[C, H, W]`.
    pub fn to_planar(&self) -> Vec<f32> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    out[(k * h + y) * w + x] = self.data[(y * w + x) * c + k];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub class: ClassLabel,
    /// Tight bound of `mask`.
    pub bbox: BBox<f64>,
    pub mask: BinaryMask,
    /// Number of set mask pixels.
    pub area: usize,
}

impl InstanceAnnotation {
    pub fn from_mask(class: ClassLabel, mask: BinaryMask) -> Result<Self> {
        let bbox = mask
            .tight_bbox()
            .ok_or_else(|| Error::InvalidGeometry("annotation mask is empty".into()))?;
        let area = mask.count();
        Ok(InstanceAnnotation {
            class,
            bbox,
            mask,
            area,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub sample_id: u64,
    pub image: Image,
    pub annotations: Vec<InstanceAnnotation>,
}

impl SceneSample {
    pub fn height(&self) -> usize {
        self.image.height
    }

    pub fn width(&self) -> usize {
        self.image.width
    }
}

/// A split together with its class catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub catalog: ClassCatalog,
    pub samples: Vec<SceneSample>,
}

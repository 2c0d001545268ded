//! Instance segmentation with a classifier-driven switch that sends each
//! refined ROI to a mask head trained for that class alone.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision used by the command-line tools.

pub mod digest;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod losses;
pub mod mask;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod split;
pub mod synth;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use geometry::{box_iou, BBox, BoxDelta};
pub use mask::{mask_iou, BinaryMask, MaskLogits};
pub use pipeline::{CheckpointRecord, InferenceOptions, PipelineConfig, PipelineModel};
pub use scalar::Scalar;
pub use split::{route, surgery, CascadeModel, HeadRegistry, InitMode, Route, SingleClassMaskHead, SplitModel};
pub use synth::{Dataset, DatasetSpec, InstanceAnnotation, SceneSample};
pub use train::{TrainConfig, TrainMode};
pub use types::{ClassCatalog, ClassDistribution, ClassLabel, Detection};

pub type PipelineModelF32 = PipelineModel<f32>;
pub type PipelineModelF64 = PipelineModel<f64>;
pub type SplitModelF32 = SplitModel<f32>;
pub type SplitModelF64 = SplitModel<f64>;
pub type CascadeModelF32 = CascadeModel<f32>;
pub type DetectionF32 = Detection<f32>;
pub type BBoxF32 = BBox<f32>;
pub type BBoxF64 = BBox<f64>;

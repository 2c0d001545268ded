//! The miniature two-stage detector: backbone, proposals, ROI alignment,
//! box-stage heads, and the shared multi-class mask head.

mod backbone;
mod checkpoint;
mod config;
mod heads;
mod inference;
mod model;
mod proposals;
mod roi_align;

pub use backbone::{Backbone, BackboneCache, FeatureMap};
pub use checkpoint::{
    CheckpointHeader, CheckpointKind, CheckpointRecord, HeadMeta, Provenance, TensorEntry, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::PipelineConfig;
pub use heads::{FcCache, FcHead, MaskCache, MaskHead};
pub use inference::{class_deltas, classify_and_refine, finish_detection, per_class_nms, InferenceOptions, RoiDecision};
pub use model::{PipelineModel, SubHead};
pub use proposals::{
    clamp_delta, generate_anchors, nms, propose_gt_jitter, refine_box, Proposal, ProposalMode, RpnGrad, RpnHead,
    RpnOutput, MAX_LOG_DELTA,
};
pub use roi_align::{roi_align, RoiFeature, RoiSampler, SAMPLING_RATIO};

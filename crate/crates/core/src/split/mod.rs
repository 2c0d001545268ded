//! Classifier-driven dispatch of refined ROIs to single-class mask heads,
//! the surgery that builds it from a baseline, and the cascade variant.

mod cascade;
mod model;
mod registry;
mod route;

pub use cascade::{default_stage_ious, foreground_argmax, CascadeModel, CascadeStage, StageTrack};
pub use model::{is_base_param, surgery, surgery_from_checkpoint, DispatchTrace, InitMode, SplitModel, REGISTRY_PREFIX};
pub use registry::{HeadRegistry, SingleClassMaskHead};
pub use route::{route, Route};

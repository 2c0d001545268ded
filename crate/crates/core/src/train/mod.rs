//! Baseline training to a plateau, per-class mask-head training with a
//! frozen base, and cascade stage training.

mod baseline;
mod cascade;
mod config;
mod heads;
mod isolation;
mod optim;
mod sampling;

pub use baseline::{image_gradient, train_baseline, BaselineRun, EpochLog, ImageStep, LossComponents, StepLog, TrainLog};
pub use cascade::train_cascade_stages;
pub use config::{PlateauRule, TrainConfig};
pub use heads::{head_seed, train_all_heads, train_class_head, ClassImage, TrainMode, TrainedHead};
pub use isolation::split_mask_loss_gradient;
pub use optim::{add_grads, grad_norm, scale_grads, Sgd};
pub use sampling::{anchor_targets, best_match, candidate_rois, label_rois, sample_rois, AnchorTarget, SampledRoi};

/// Deterministic seed from a base seed and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter().fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t)))
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Reduction;

/// Stop once the last `window` evaluations improve on the best earlier
/// value by less than `min_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauRule {
    pub min_delta: f64,
    pub window: usize,
}

impl Default for PlateauRule {
    fn default() -> Self {
        PlateauRule {
            min_delta: 0.002,
            window: 3,
        }
    }
}

impl PlateauRule {
    pub fn reached(&self, history: &[f64]) -> bool {
        if self.window == 0 || history.len() <= self.window {
            return false;
        }
        let split = history.len() - self.window;
        let before = history[..split].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let recent = history[split..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        recent - before < self.min_delta
    }
}

/// Optimizer, schedule, and ROI sampling settings shared by every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Fraction of `epochs` after which the rate is multiplied by `lr_gamma`.
    pub lr_drop_fraction: f64,
    pub lr_gamma: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
    pub rois_per_image: usize,
    pub positive_fraction: f64,
    pub positive_iou: f64,
    /// Candidate ROIs: jittered copies of each ground-truth box.
    pub jitter_amplitude: f64,
    pub jitter_copies: usize,
    /// Candidate ROIs: current learned proposals.
    pub learned_proposals: usize,
    /// Candidate ROIs: uniformly random boxes.
    pub random_boxes: usize,
    pub rpn_batch: usize,
    pub rpn_positive_iou: f64,
    pub rpn_negative_iou: f64,
    pub mask_reduction: Reduction,
    pub plateau: PlateauRule,
    /// Validation period in epochs; 0 disables validation.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 12,
            lr_drop_fraction: 2.0 / 3.0,
            lr_gamma: 0.1,
            warmup_steps: 50,
            grad_clip: Some(10.0),
            batch_size: 8,
            seed: 0,
            rois_per_image: 64,
            positive_fraction: 0.25,
            positive_iou: 0.5,
            jitter_amplitude: 0.1,
            jitter_copies: 4,
            learned_proposals: 32,
            random_boxes: 16,
            rpn_batch: 128,
            rpn_positive_iou: 0.7,
            rpn_negative_iou: 0.3,
            mask_reduction: Reduction::Mean,
            plateau: PlateauRule::default(),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    /// Default schedule for single-class head training.
    pub fn heads() -> Self {
        TrainConfig {
            epochs: 4,
            eval_every: 0,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return bad("positive_fraction must lie in [0, 1]");
        }
        if self.rois_per_image == 0 {
            return bad("rois_per_image must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.positive_iou) {
            return bad("positive_iou must lie in [0, 1]");
        }
        Ok(())
    }

    /// Learning rate at a global step within `epoch`.
    pub fn lr_at(&self, step: usize, epoch: usize) -> f64 {
        let drop_at = (self.lr_drop_fraction * self.epochs as f64).ceil() as usize;
        let mut lr = self.learning_rate;
        if self.epochs > 1 && epoch >= drop_at {
            lr *= self.lr_gamma;
        }
        if self.warmup_steps > 0 && step < self.warmup_steps {
            lr *= (step + 1) as f64 / self.warmup_steps as f64;
        }
        lr
    }

    /// Canonical serialized form; identical bytes for identical settings.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_on_reference_history() {
        let r = PlateauRule::default();
        assert!(r.reached(&[0.50, 0.501, 0.5015, 0.5016]));
        assert!(!r.reached(&[0.50, 0.501, 0.5015]));
        assert!(!r.reached(&[0.50, 0.51, 0.5015, 0.5016]));
    }

    #[test]
    fn schedule_drops_at_two_thirds() {
        let c = TrainConfig {
            warmup_steps: 0,
            ..TrainConfig::default()
        };
        assert_eq!(c.lr_at(0, 7), 0.01);
        assert!((c.lr_at(0, 8) - 0.001).abs() < 1e-15);
    }
}

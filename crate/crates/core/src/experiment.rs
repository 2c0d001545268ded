//! The before/after experiment end to end: generate data, train the
//! baseline to plateau, split its mask head, train the per-class heads,
//! and compare per-class mask AP.

use log::info;

use crate::error::Result;
use crate::eval::{compare_reports, evaluate_model, EvalReport};
use crate::pipeline::{InferenceOptions, PipelineConfig, PipelineModel};
use crate::split::{surgery, InitMode};
use crate::synth::{dataset_digest, generate_split, Dataset, DatasetSpec, Split};
use crate::train::{train_all_heads, train_baseline, TrainConfig, TrainMode};
use crate::types::ClassLabel;

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub seed: u64,
    pub train_samples: usize,
    pub val_samples: usize,
    /// Epoch cap of the baseline; the plateau rule usually stops it earlier.
    pub baseline_epochs: usize,
    pub head_epochs: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            seed: 0,
            train_samples: 500,
            val_samples: 100,
            baseline_epochs: 16,
            head_epochs: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub report: EvalReport,
    /// Epochs the baseline ran, and the epoch the plateau rule fired at.
    pub baseline_epochs: usize,
    pub plateau_epoch: Option<usize>,
    pub metric_history: Vec<f64>,
}

impl ProtocolOutcome {
    /// Classes whose mask AP went up.
    pub fn improved_classes(&self) -> usize {
        self.report
            .classes
            .iter()
            .filter(|c| c.delta[0].is_some_and(|d| d > 0.0))
            .count()
    }

    pub fn mean_improved(&self) -> bool {
        self.report.mean_delta.is_some_and(|d| d > 0.0)
    }
}

/// Runs the experiment for one seed. The seed drives the dataset, the
/// initialization, and both training schedules.
pub fn run_protocol(p: &Protocol) -> Result<ProtocolOutcome> {
    let spec = DatasetSpec {
        train_samples: p.train_samples,
        val_samples: p.val_samples,
        seed: 7 + p.seed,
        ..DatasetSpec::default()
    };
    let train = generate_split(&spec, Split::Train)?;
    let val = Dataset {
        catalog: spec.catalog(),
        samples: generate_split(&spec, Split::Val)?,
    };
    let digest = dataset_digest(&val.catalog, &val.samples)?;

    let cfg = PipelineConfig {
        num_classes: spec.num_classes,
        image_height: spec.height,
        image_width: spec.width,
        init_seed: p.seed,
        ..PipelineConfig::default()
    };
    let model = PipelineModel::<f32>::initialized(cfg, spec.catalog())?;
    let tc = TrainConfig {
        epochs: p.baseline_epochs,
        seed: p.seed,
        ..TrainConfig::default()
    };
    let run = train_baseline(model, &train, Some((&val, &digest)), &tc)?;
    info!(
        "seed {}: baseline stopped after {} epochs, plateau {:?}",
        p.seed, run.record.header.epoch, run.plateau_epoch
    );
    let opts = InferenceOptions::default();
    let before = evaluate_model(&run.model, "baseline", run.record.digest(), &val, &digest, &opts)?;

    let split = surgery(&run.model, InitMode::Slice, run.record.digest())?;
    let hc = TrainConfig {
        epochs: p.head_epochs,
        seed: p.seed,
        ..TrainConfig::heads()
    };
    let classes: Vec<ClassLabel> = val.catalog.foreground().collect();
    let trained = train_all_heads(&split, &classes, &train, &hc, TrainMode::Sequential, 1)?;
    let after_digest = trained.to_checkpoint()?.digest().to_string();
    let after = evaluate_model(&trained, "split", &after_digest, &val, &digest, &opts)?;
    Ok(ProtocolOutcome {
        report: compare_reports(&before, &after)?,
        baseline_epochs: run.record.header.epoch,
        plateau_epoch: run.plateau_epoch,
        metric_history: run.record.header.metric_history.clone(),
    })
}

use log::warn;

use super::SceneSample;
use crate::types::ClassLabel;

/// Validation subset dedicated to one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSubset {
    pub class: ClassLabel,
    pub samples: Vec<SceneSample>,
    /// Set when the class never occurs in the source split.
    pub absent: bool,
}

/// Keeps the samples with at least one instance of `class`, dropping every
/// other class's annotations.
pub fn split_validation_per_class(samples: &[SceneSample], class: ClassLabel) -> ClassSubset {
    let kept: Vec<SceneSample> = samples
        .iter()
        .filter(|s| s.annotations.iter().any(|a| a.class == class))
        .map(|s| SceneSample {
            sample_id: s.sample_id,
            image: s.image.clone(),
            annotations: s.annotations.iter().filter(|a| a.class == class).cloned().collect(),
        })
        .collect();
    let absent = kept.is_empty();
    if absent {
        warn!("class {class} does not occur in the split; its sub-dataset is empty");
    }
    ClassSubset {
        class,
        samples: kept,
        absent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use crate::synth::{Image, InstanceAnnotation};

    fn sample(id: u64, classes: &[u32]) -> SceneSample {
        SceneSample {
            sample_id: id,
            image: Image::zeros(8, 8, 3),
            annotations: classes
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let m = BinaryMask::from_fn(8, 8, |y, x| y == k && x < 3);
                    InstanceAnnotation::from_mask(ClassLabel(c), m).unwrap()
                })
                .collect(),
        }
    }

    #[test]
    fn ubiquitous_class_keeps_everything() {
        let s = vec![sample(0, &[1, 2]), sample(1, &[1]), sample(2, &[2, 1, 1])];
        let sub = split_validation_per_class(&s, ClassLabel(1));
        assert_eq!(sub.samples.len(), 3);
        assert!(sub.samples.iter().flat_map(|s| &s.annotations).all(|a| a.class == ClassLabel(1)));
        assert_eq!(sub.samples.iter().map(|s| s.annotations.len()).sum::<usize>(), 4);
    }

    #[test]
    fn absent_class_is_flagged() {
        let s = vec![sample(0, &[1, 2])];
        let sub = split_validation_per_class(&s, ClassLabel(3));
        assert!(sub.absent && sub.samples.is_empty());
    }
}

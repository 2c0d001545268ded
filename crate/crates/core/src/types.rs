//! Class labels, classifier outputs, and final detections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::mask::{BinaryMask, MaskLogits};
use crate::scalar::Scalar;

/// Class id in `[0, N]`; `0` is background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub u32);

impl ClassLabel {
    pub const BACKGROUND: ClassLabel = ClassLabel(0);

    pub fn new(id: u32, num_classes: usize) -> Result<Self> {
        if id as usize > num_classes {
            return Err(Error::InvalidClass(format!(
                "class {id} outside [0, {num_classes}]"
            )));
        }
        Ok(ClassLabel(id))
    }

    /// Foreground class in `[1, N]`.
    pub fn foreground(id: u32, num_classes: usize) -> Result<Self> {
        if id == 0 || id as usize > num_classes {
            return Err(Error::InvalidClass(format!(
                "foreground class {id} outside [1, {num_classes}]"
            )));
        }
        Ok(ClassLabel(id))
    }

    pub fn is_background(self) -> bool {
        self.0 == 0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Names of the foreground classes; `names[k]` belongs to class `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCatalog {
    pub names: Vec<String>,
}

impl ClassCatalog {
    pub fn new(names: Vec<String>) -> Self {
        ClassCatalog { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, class: ClassLabel) -> &str {
        if class.is_background() {
            "background"
        } else {
            self.names
                .get(class.index() - 1)
                .map(String::as_str)
                .unwrap_or("?")
        }
    }

    pub fn foreground(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        (1..=self.names.len() as u32).map(ClassLabel)
    }
}

/// Probability vector over background plus `N` foreground classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ClassDistribution<T> {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDistribution(
                "need background plus at least one class".into(),
            ));
        }
        let mut sum = 0.0f64;
        for &p in &probs {
            let v = p.as_f64();
            if !v.is_finite() || !(0.0..=1.0 + Self::SUM_TOLERANCE).contains(&v) {
                return Err(Error::InvalidDistribution(format!("entry {v} outside [0,1]")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(ClassDistribution { probs })
    }

    /// Softmax of raw classifier logits.
    pub fn from_logits(logits: &[T]) -> Self {
        ClassDistribution {
            probs: softmax(logits),
        }
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn prob(&self, class: ClassLabel) -> T {
        self.probs[class.index()]
    }

    /// First index of the maximum entry.
    pub fn argmax(&self) -> ClassLabel {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        ClassLabel(best as u32)
    }

    /// Arithmetic mean of several distributions, renormalized.
    pub fn mean(dists: &[ClassDistribution<T>]) -> Result<Self> {
        let first = dists
            .first()
            .ok_or_else(|| Error::Empty("no distributions to average".into()))?;
        let k = first.probs.len();
        let mut acc = vec![T::zero(); k];
        for d in dists {
            if d.probs.len() != k {
                return Err(Error::DimensionMismatch("distribution lengths differ".into()));
            }
            for (a, &p) in acc.iter_mut().zip(&d.probs) {
                *a += p;
            }
        }
        let total: T = acc.iter().copied().sum();
        Ok(ClassDistribution {
            probs: acc.into_iter().map(|v| v / total).collect(),
        })
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Final per-instance output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    pub class: ClassLabel,
    pub score: T,
    /// Binarized mask at image resolution.
    pub mask: BinaryMask,
    /// Head-resolution logits the mask was pasted from.
    pub logits: MaskLogits<T>,
}

impl<T: Scalar> Detection<T> {
    pub fn area(&self) -> usize {
        self.mask.count()
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Image, InstanceAnnotation, SceneSample};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::types::{ClassCatalog, ClassLabel};

/// Shape vocabulary; class `k` draws `Shape::ALL[k - 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Rectangle,
    Triangle,
    Ellipse,
    Ring,
}

impl Shape {
    pub const ALL: [Shape; 5] = [Shape::Disk, Shape::Rectangle, Shape::Triangle, Shape::Ellipse, Shape::Ring];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Rectangle => "rectangle",
            Shape::Triangle => "triangle",
            Shape::Ellipse => "ellipse",
            Shape::Ring => "ring",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 0x7452_4149_4e00_0001,
            Split::Val => 0x5641_4c00_0000_0002,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub height: usize,
    pub width: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    /// Object extent range in pixels, sampled log-uniformly.
    pub min_size: f64,
    pub max_size: f64,
    pub occlusion: bool,
    /// Under-sampled class, if any.
    pub rare_class: Option<u32>,
    /// Relative sampling weight of the rare class (others weigh 1).
    pub rare_weight: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            num_classes: 5,
            train_samples: 500,
            val_samples: 100,
            height: 128,
            width: 128,
            min_instances: 1,
            max_instances: 5,
            min_size: 6.0,
            max_size: 52.0,
            occlusion: true,
            rare_class: Some(5),
            rare_weight: 0.35,
            seed: 7,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.num_classes > Shape::ALL.len() {
            return Err(Error::InvalidSpec(format!(
                "num_classes must be in [1, {}]",
                Shape::ALL.len()
            )));
        }
        if self.min_instances > self.max_instances {
            return Err(Error::InvalidSpec("min_instances > max_instances".into()));
        }
        if !(self.min_size >= 4.0 && self.min_size <= self.max_size) {
            return Err(Error::InvalidSpec("size range must satisfy 4 <= min <= max".into()));
        }
        let side = self.height.min(self.width) as f64;
        if self.max_size + 2.0 > side {
            return Err(Error::InvalidSpec(format!(
                "objects up to {} px do not fit a {}x{} canvas",
                self.max_size, self.height, self.width
            )));
        }
        if let Some(r) = self.rare_class {
            if r == 0 || r as usize > self.num_classes {
                return Err(Error::InvalidSpec(format!("rare class {r} outside catalog")));
            }
            if !(self.rare_weight > 0.0 && self.rare_weight <= 1.0) {
                return Err(Error::InvalidSpec("rare_weight must be in (0, 1]".into()));
            }
        }
        // Without occlusion every instance needs its own free footprint.
        let canvas = (self.height * self.width) as f64;
        let min_footprint = (self.min_size + 2.0).powi(2);
        let needed = self.max_instances as f64 * min_footprint;
        if !self.occlusion && needed > canvas * 0.5 {
            return Err(Error::InvalidSpec(format!(
                "{} non-overlapping instances of at least {} px do not fit the canvas",
                self.max_instances, self.min_size
            )));
        }
        if self.occlusion && needed > canvas {
            return Err(Error::InvalidSpec(format!(
                "{} instances of at least {} px exceed the canvas",
                self.max_instances, self.min_size
            )));
        }
        Ok(())
    }

    pub fn catalog(&self) -> ClassCatalog {
        ClassCatalog::new(
            Shape::ALL[..self.num_classes]
                .iter()
                .map(|s| s.name().to_string())
                .collect(),
        )
    }

    pub fn samples(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_samples,
            Split::Val => self.val_samples,
        }
    }
}

/// Per-class sampling weights, indexed by `class - 1`.
pub fn class_weights(spec: &DatasetSpec) -> Vec<f64> {
    (1..=spec.num_classes as u32)
        .map(|c| if Some(c) == spec.rare_class { spec.rare_weight } else { 1.0 })
        .collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one sample; its structure stream is `ChaCha8Rng::seed_from_u64`
/// of this value and its geometry stream adds [`GEOMETRY_STREAM`].
pub fn sample_seed(master: u64, split: Split, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ split.tag()).wrapping_add(index))
}

const GEOMETRY_STREAM: u64 = 0x6765_6f6d;

/// Planned instance classes for one sample, in depth order (first = back).
pub fn sample_plan(spec: &DatasetSpec, split: Split, index: u64) -> Vec<ClassLabel> {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(spec.seed, split, index));
    let count = rng.gen_range(spec.min_instances..=spec.max_instances);
    let weights = class_weights(spec);
    let total: f64 = weights.iter().sum();
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = weights.len();
            for (k, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = k + 1;
                    break;
                }
            }
            ClassLabel(chosen as u32)
        })
        .collect()
}

/// Geometric parameters of one drawn instance.
struct Placement {
    cx: f64,
    cy: f64,
    size: f64,
    aspect: f64,
    flip: bool,
}

fn rasterize(shape: Shape, p: &Placement, height: usize, width: usize) -> BinaryMask {
    let r = p.size / 2.0;
    BinaryMask::from_fn(height, width, |y, x| {
        let dx = x as f64 + 0.5 - p.cx;
        let dy = y as f64 + 0.5 - p.cy;
        let (dx, dy) = if p.flip { (dy, dx) } else { (dx, dy) };
        match shape {
            Shape::Disk => dx * dx + dy * dy <= r * r,
            Shape::Rectangle => dx.abs() <= r && dy.abs() <= r * p.aspect,
            Shape::Ellipse => {
                let b = r * p.aspect;
                (dx / r).powi(2) + (dy / b).powi(2) <= 1.0
            }
            Shape::Ring => {
                let d2 = dx * dx + dy * dy;
                let inner = r * 0.55;
                d2 <= r * r && d2 >= inner * inner
            }
            Shape::Triangle => {
                // apex at the top (or left when flipped), base at the bottom
                let h = r * 2.0 * 0.9;
                let t = (dy + h / 2.0) / h;
                (0.0..=1.0).contains(&t) && dx.abs() <= r * t
            }
        }
    })
}

fn sample_placement<R: Rng>(rng: &mut R, spec: &DatasetSpec, shape: Shape) -> Placement {
    let size = (spec.min_size.ln() + rng.gen::<f64>() * (spec.max_size / spec.min_size).ln()).exp();
    let aspect = match shape {
        Shape::Rectangle => rng.gen_range(0.45..0.9),
        Shape::Ellipse => rng.gen_range(0.4..0.6),
        _ => 1.0,
    };
    let margin = size / 2.0 + 1.0;
    Placement {
        cx: rng.gen_range(margin..=(spec.width as f64 - margin)),
        cy: rng.gen_range(margin..=(spec.height as f64 - margin)),
        size,
        aspect,
        flip: rng.gen::<bool>(),
    }
}

fn dilate(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    BinaryMask::from_fn(h, w, |y, x| {
        let y0 = y.saturating_sub(1);
        let x0 = x.saturating_sub(1);
        (y0..(y + 2).min(h)).any(|yy| (x0..(x + 2).min(w)).any(|xx| mask.get(yy, xx)))
    })
}

const PLACEMENT_ATTEMPTS: usize = 200;

fn generate_sample(spec: &DatasetSpec, split: Split, index: u64) -> Result<SceneSample> {
    let plan = sample_plan(spec, split, index);
    let seed = sample_seed(spec.seed, split, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(GEOMETRY_STREAM));
    let (h, w) = (spec.height, spec.width);

    // Smooth background gradient plus noise.
    let base: [f32; 3] = [rng.gen_range(0.0..0.35), rng.gen_range(0.0..0.35), rng.gen_range(0.0..0.35)];
    let tilt: [f32; 2] = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
    let mut image = Image::zeros(h, w, 3);
    for y in 0..h {
        for x in 0..w {
            let g = tilt[0] * (x as f32 / w as f32) + tilt[1] * (y as f32 / h as f32);
            let px = &mut image.data[(y * w + x) * 3..][..3];
            for (p, b) in px.iter_mut().zip(base) {
                *p = b + g;
            }
        }
    }

    let mut drawn: Vec<(ClassLabel, BinaryMask, usize)> = Vec::with_capacity(plan.len());
    let mut occupied = BinaryMask::zeros(h, w);
    for &class in &plan {
        let shape = Shape::ALL[class.index() - 1];
        let mut accepted = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let p = sample_placement(&mut rng, spec, shape);
            let m = rasterize(shape, &p, h, w);
            if m.is_empty() {
                continue;
            }
            let ok = if spec.occlusion {
                // never hide more than half of an earlier instance
                drawn.iter().all(|(_, prev, _)| {
                    let visible = prev.count();
                    visible == 0 || prev.intersect_count(&m) * 2 <= visible
                })
            } else {
                dilate(&m).intersect_count(&occupied) == 0
            };
            if ok {
                accepted = Some(m);
                break;
            }
        }
        let Some(m) = accepted else {
            return Err(Error::InvalidSpec(format!(
                "could not place instance {} of sample {index} ({} split)",
                drawn.len(),
                split.name()
            )));
        };
        let color: [f32; 3] = loop {
            let c = [rng.gen_range(0.3..1.0f32), rng.gen_range(0.3..1.0f32), rng.gen_range(0.3..1.0f32)];
            let contrast: f32 = (0..3).map(|k| (c[k] - base[k]).abs()).sum();
            if contrast > 0.6 {
                break c;
            }
        };
        for y in 0..h {
            for x in 0..w {
                if m.get(y, x) {
                    image.data[(y * w + x) * 3..][..3].copy_from_slice(&color);
                }
            }
        }
        for (_, prev, _) in drawn.iter_mut() {
            prev.subtract(&m);
        }
        for (o, &b) in m.bits().iter().enumerate() {
            if b != 0 {
                occupied.set(o / w, o % w, true);
            }
        }
        let full = m.count();
        drawn.push((class, m, full));
    }
    for v in image.data.iter_mut() {
        *v = (*v + rng.gen_range(-0.03..0.03f32)).clamp(0.0, 1.0);
    }

    let annotations = drawn
        .into_iter()
        .filter(|(_, m, _)| !m.is_empty())
        .map(|(c, m, _)| InstanceAnnotation::from_mask(c, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneSample {
        sample_id: index,
        image,
        annotations,
    })
}

/// Generates a full split; sample `i` depends only on `(seed, split, i)`.
pub fn generate_split(spec: &DatasetSpec, split: Split) -> Result<Vec<SceneSample>> {
    spec.validate()?;
    (0..spec.samples(split) as u64)
        .into_par_iter()
        .map(|i| generate_sample(spec, split, i))
        .collect()
}

//! Region proposals: a single-level anchor head with non-maximum
//! suppression, and a ground-truth jitter source for training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backbone::FeatureMap;
use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::geometry::{decode_box_delta, iou_unchecked, BBox, BoxDelta};
use crate::nn::{join, relu_backward_inplace, relu_inplace, Conv2d, ParamSet, Tensor};
use crate::scalar::Scalar;

/// Upper bound on predicted log-size deltas.
pub const MAX_LOG_DELTA: f64 = 4.135_166_556_742_356; // ln(1000 / 16)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ProposalMode {
    /// Anchor head, NMS at the configured IoU, keep the top `k`.
    Learned { k: usize },
    /// Ground-truth boxes perturbed by up to `amplitude` of their size.
    GtJitter { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    pub bbox: BBox<T>,
    pub score: T,
}

/// Anchors in `(y, x, a)` order, centered on feature cells.
pub fn generate_anchors<T: Scalar>(cfg: &PipelineConfig) -> Vec<BBox<T>> {
    let (fh, fw) = cfg.feature_size();
    let stride = T::from_count(cfg.stride());
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(fh * fw * cfg.anchors_per_location());
    for y in 0..fh {
        for x in 0..fw {
            let cx = (T::from_count(x) + half) * stride;
            let cy = (T::from_count(y) + half) * stride;
            for &size in &cfg.anchor_sizes {
                for &ratio in &cfg.anchor_ratios {
                    let w = T::lit(size / ratio.sqrt());
                    let h = T::lit(size * ratio.sqrt());
                    out.push(BBox {
                        x1: cx - half * w,
                        y1: cy - half * h,
                        x2: cx + half * w,
                        y2: cy + half * h,
                    });
                }
            }
        }
    }
    out
}

/// Score-ordered greedy suppression; ties keep the lower index first.
/// Returns kept indices in descending score order.
pub fn nms<T: Scalar>(boxes: &[BBox<T>], scores: &[T], iou_threshold: T) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut keep: Vec<usize> = Vec::new();
    let mut suppressed = vec![false; boxes.len()];
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou_unchecked(&boxes[i], &boxes[j]) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    keep
}

/// Clamps log-size deltas so decoding stays finite.
pub fn clamp_delta<T: Scalar>(d: BoxDelta<T>) -> BoxDelta<T> {
    let m = T::lit(MAX_LOG_DELTA);
    BoxDelta {
        dw: d.dw.min(m),
        dh: d.dh.min(m),
        ..d
    }
}

/// Decodes a weighted regression output against `reference` and clips it to
/// the image; `None` when the clipped box collapses.
pub fn refine_box<T: Scalar>(raw: [T; 4], weights: [f64; 4], reference: &BBox<T>, w: usize, h: usize) -> Option<BBox<T>> {
    let d = BoxDelta {
        dx: raw[0] / T::lit(weights[0]),
        dy: raw[1] / T::lit(weights[1]),
        dw: raw[2] / T::lit(weights[2]),
        dh: raw[3] / T::lit(weights[3]),
    };
    let b = decode_box_delta(&clamp_delta(d), reference).ok()?;
    let c = b.clip(T::from_count(w), T::from_count(h))?;
    (c.width() >= T::lit(1e-2) && c.height() >= T::lit(1e-2)).then_some(c)
}

/// Perturbs each box corner by a uniform offset of at most `amplitude`
/// times the box size, then clips to the image.
pub fn propose_gt_jitter<T: Scalar, R: Rng>(
    gt: &[BBox<T>],
    amplitude: f64,
    width: usize,
    height: usize,
    rng: &mut R,
) -> Vec<Proposal<T>> {
    gt.iter()
        .filter_map(|b| {
            let j = |rng: &mut R, size: T| {
                if amplitude == 0.0 {
                    T::zero()
                } else {
                    T::lit(rng.gen_range(-amplitude..=amplitude)) * size
                }
            };
            let (bw, bh) = (b.width(), b.height());
            let cand = BBox {
                x1: b.x1 + j(rng, bw),
                y1: b.y1 + j(rng, bh),
                x2: b.x2 + j(rng, bw),
                y2: b.y2 + j(rng, bh),
            };
            cand.clip(T::from_count(width), T::from_count(height))
                .map(|bbox| Proposal { bbox, score: T::one() })
        })
        .collect()
}

/// Objectness and anchor-regression head.
#[derive(Debug, Clone, PartialEq)]
pub struct RpnHead<T> {
    pub conv: Conv2d<T>,
    pub objectness: Conv2d<T>,
    pub deltas: Conv2d<T>,
}

pub struct RpnOutput<T> {
    hidden: Tensor<T>,
    /// `[A, h, w]`
    pub objectness: Tensor<T>,
    /// `[4A, h, w]`
    pub deltas: Tensor<T>,
}

impl<T: Scalar> RpnOutput<T> {
    /// Objectness logit of anchor `idx` in `(y, x, a)` order.
    pub fn logit(&self, idx: usize) -> T {
        let (h, w) = (self.objectness.shape[1], self.objectness.shape[2]);
        let a_count = self.objectness.shape[0];
        let (cell, a) = (idx / a_count, idx % a_count);
        self.objectness.data[a * h * w + cell]
    }

    pub fn delta(&self, idx: usize) -> [T; 4] {
        let (h, w) = (self.deltas.shape[1], self.deltas.shape[2]);
        let a_count = self.objectness.shape[0];
        let (cell, a) = (idx / a_count, idx % a_count);
        std::array::from_fn(|k| self.deltas.data[(4 * a + k) * h * w + cell])
    }
}

/// Gradient buffers shaped like an [`RpnOutput`].
pub struct RpnGrad<T> {
    pub objectness: Tensor<T>,
    pub deltas: Tensor<T>,
}

impl<T: Scalar> RpnGrad<T> {
    pub fn zeros_for(out: &RpnOutput<T>) -> Self {
        RpnGrad {
            objectness: out.objectness.zeros_like(),
            deltas: out.deltas.zeros_like(),
        }
    }

    pub fn add_logit(&mut self, idx: usize, g: T) {
        let (h, w) = (self.objectness.shape[1], self.objectness.shape[2]);
        let a_count = self.objectness.shape[0];
        let (cell, a) = (idx / a_count, idx % a_count);
        self.objectness.data[a * h * w + cell] += g;
    }

    pub fn add_delta(&mut self, idx: usize, g: [T; 4]) {
        let (h, w) = (self.deltas.shape[1], self.deltas.shape[2]);
        let a_count = self.objectness.shape[0];
        let (cell, a) = (idx / a_count, idx % a_count);
        for (k, gv) in g.into_iter().enumerate() {
            self.deltas.data[(4 * a + k) * h * w + cell] += gv;
        }
    }
}

impl<T: Scalar> RpnHead<T> {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let c = cfg.feature_channels();
        let a = cfg.anchors_per_location();
        RpnHead {
            conv: Conv2d::new(c, c, 3, 1, 1),
            objectness: Conv2d::new(c, a, 1, 1, 0),
            deltas: Conv2d::new(c, 4 * a, 1, 1, 0),
        }
    }

    pub fn init<R: Rng>(&mut self, rng: &mut R) {
        self.conv.init(rng);
        self.objectness.init(rng);
        self.objectness.weight.scale(T::lit(0.1));
        self.deltas.init(rng);
        self.deltas.weight.scale(T::lit(0.1));
    }

    pub fn zeros_like(&self) -> Self {
        RpnHead {
            conv: self.conv.zeros_like(),
            objectness: self.objectness.zeros_like(),
            deltas: self.deltas.zeros_like(),
        }
    }

    pub fn forward(&self, fm: &FeatureMap<T>) -> RpnOutput<T> {
        let mut hidden = self.conv.forward(&fm.data);
        relu_inplace(&mut hidden.data);
        RpnOutput {
            objectness: self.objectness.forward(&hidden),
            deltas: self.deltas.forward(&hidden),
            hidden,
        }
    }

    /// Returns the feature-map gradient.
    pub fn backward(&self, fm: &FeatureMap<T>, out: &RpnOutput<T>, g: &RpnGrad<T>, grad: &mut RpnHead<T>) -> Tensor<T> {
        let mut gh = self
            .objectness
            .backward(&out.hidden, &g.objectness, &mut grad.objectness, true)
            .unwrap();
        let gh2 = self.deltas.backward(&out.hidden, &g.deltas, &mut grad.deltas, true).unwrap();
        gh.add_assign(&gh2);
        relu_backward_inplace(&out.hidden.data, &mut gh.data);
        self.conv.backward(&fm.data, &gh, &mut grad.conv, true).unwrap()
    }

    /// Learned proposals: decode, clip, pre-NMS top-n, NMS, top-`k`.
    pub fn propose(
        &self,
        cfg: &PipelineConfig,
        anchors: &[BBox<T>],
        fm: &FeatureMap<T>,
        k: usize,
    ) -> Result<Vec<Proposal<T>>> {
        if k == 0 {
            return Err(Error::InvalidArgument("proposal count k must be >= 1".into()));
        }
        let out = self.forward(fm);
        let (w, h) = (cfg.image_width, cfg.image_height);
        let mut cands: Vec<(usize, T)> = (0..anchors.len()).map(|i| (i, out.logit(i))).collect();
        cands.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        let mut boxes = Vec::new();
        let mut scores = Vec::new();
        for (i, s) in cands {
            if boxes.len() >= cfg.rpn_pre_nms {
                break;
            }
            let Some(b) = anchors[i].clip(T::from_count(w), T::from_count(h)) else {
                continue;
            };
            // regress from the clipped anchor so decoding stays in-bounds
            if let Some(r) = refine_box(out.delta(i), [1.0; 4], &b, w, h) {
                if r.width() >= T::one() && r.height() >= T::one() {
                    boxes.push(r);
                    scores.push(s);
                }
            }
        }
        if boxes.is_empty() && anchors.iter().all(|a| a.clip(T::from_count(w), T::from_count(h)).is_none()) {
            return Err(Error::InvalidGeometry("no anchor overlaps the image".into()));
        }
        let keep = nms(&boxes, &scores, T::lit(cfg.rpn_nms_iou));
        Ok(keep
            .into_iter()
            .take(k)
            .map(|i| Proposal {
                bbox: boxes[i],
                score: crate::scalar::sigmoid(scores[i]),
            })
            .collect())
    }
}

impl<T: Scalar> ParamSet<T> for RpnHead<T> {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.conv.visit(&join(prefix, "conv"), out);
        self.objectness.visit(&join(prefix, "objectness"), out);
        self.deltas.visit(&join(prefix, "deltas"), out);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.conv.visit_mut(&join(prefix, "conv"), out);
        self.objectness.visit_mut(&join(prefix, "objectness"), out);
        self.deltas.visit_mut(&join(prefix, "deltas"), out);
    }
}

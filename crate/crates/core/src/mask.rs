//! Dense binary masks, mask-head logit planes, and the resampling between
//! image resolution and head resolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::{sigmoid, Scalar};

/// Row-major occupancy grid with values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for a {height}x{width} mask",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(BinaryMask {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(y, x) as u8);
            }
        }
        BinaryMask {
            height,
            width,
            bits,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Tight pixel-edge bounding box of the set pixels.
    pub fn tight_bbox(&self) -> Option<BBox<f64>> {
        let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(y, x) {
                    any = true;
                    x1 = x1.min(x);
                    y1 = y1.min(y);
                    x2 = x2.max(x + 1);
                    y2 = y2.max(y + 1);
                }
            }
        }
        any.then_some(BBox {
            x1: x1 as f64,
            y1: y1 as f64,
            x2: x2 as f64,
            y2: y2 as f64,
        })
    }

    pub fn intersect_count(&self, other: &BinaryMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a != 0 && **b != 0)
            .count()
    }

    /// Clears every pixel set in `other`.
    pub fn subtract(&mut self, other: &BinaryMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            if *b != 0 {
                *a = 0;
            }
        }
    }

    pub fn row_string(&self, y: usize) -> String {
        self.bits[y * self.width..(y + 1) * self.width]
            .iter()
            .map(|&b| if b != 0 { '1' } else { '0' })
            .collect()
    }
}

/// `|a & b| / |a | b|`; two empty masks count as a perfect match.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.height != b.height || a.width != b.width {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Square `M x M` plane of real-valued mask logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskLogits<T> {
    pub size: usize,
    pub logits: Vec<T>,
}

impl<T: Scalar> MaskLogits<T> {
    pub fn new(size: usize, logits: Vec<T>) -> Result<Self> {
        if logits.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{} logits for a {size}x{size} plane",
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mask logits".into()));
        }
        Ok(MaskLogits { size, logits })
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.logits.iter().map(|&v| sigmoid(v)).collect()
    }
}

/// Pastes an `M x M` probability plane into `box` on an `height x width`
/// canvas by bilinear upsampling, then thresholds at `threshold`. Pixels
/// whose centers fall outside the box stay zero.
pub fn paste_mask<T: Scalar>(
    probs: &[T],
    size: usize,
    bbox: &BBox<T>,
    height: usize,
    width: usize,
    threshold: T,
) -> BinaryMask {
    let mut out = BinaryMask::zeros(height, width);
    let half = T::lit(0.5);
    let m = T::from_count(size);
    let bw = bbox.width();
    let bh = bbox.height();
    let x_lo = bbox.x1.floor().max(T::zero()).to_usize().unwrap_or(0);
    let y_lo = bbox.y1.floor().max(T::zero()).to_usize().unwrap_or(0);
    let x_hi = bbox.x2.ceil().to_usize().unwrap_or(0).min(width);
    let y_hi = bbox.y2.ceil().to_usize().unwrap_or(0).min(height);
    let last = T::from_count(size - 1);
    for py in y_lo..y_hi {
        let cy = T::from_count(py) + half;
        if cy < bbox.y1 || cy >= bbox.y2 {
            continue;
        }
        let v = ((cy - bbox.y1) / bh * m - half).max(T::zero()).min(last);
        let v0 = v.floor().to_usize().unwrap();
        let v1 = (v0 + 1).min(size - 1);
        let fv = v - T::from_count(v0);
        for px in x_lo..x_hi {
            let cx = T::from_count(px) + half;
            if cx < bbox.x1 || cx >= bbox.x2 {
                continue;
            }
            let u = ((cx - bbox.x1) / bw * m - half).max(T::zero()).min(last);
            let u0 = u.floor().to_usize().unwrap();
            let u1 = (u0 + 1).min(size - 1);
            let fu = u - T::from_count(u0);
            let p = probs[v0 * size + u0] * (T::one() - fu) * (T::one() - fv)
                + probs[v0 * size + u1] * fu * (T::one() - fv)
                + probs[v1 * size + u0] * (T::one() - fu) * fv
                + probs[v1 * size + u1] * fu * fv;
            if p >= threshold {
                out.set(py, px, true);
            }
        }
    }
    out
}

/// Crops `mask` to `roi` and resamples to `size x size` by nearest neighbour
/// (sample at each output cell center). Samples outside the image read 0.
pub fn crop_resample_nearest<T: Scalar>(mask: &BinaryMask, roi: &BBox<T>, size: usize) -> BinaryMask {
    let half = T::lit(0.5);
    let m = T::from_count(size);
    let cell_w = roi.width() / m;
    let cell_h = roi.height() / m;
    BinaryMask::from_fn(size, size, |i, j| {
        let sy = roi.y1 + (T::from_count(i) + half) * cell_h;
        let sx = roi.x1 + (T::from_count(j) + half) * cell_w;
        if sy < T::zero() || sx < T::zero() {
            return false;
        }
        let (py, px) = (sy.floor().to_usize().unwrap(), sx.floor().to_usize().unwrap());
        py < mask.height() && px < mask.width() && mask.get(py, px)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_examples() {
        let a = BinaryMask::from_fn(4, 4, |_, x| x < 2);
        let b = BinaryMask::from_fn(4, 4, |y, _| y < 2);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        let c = BinaryMask::from_fn(4, 4, |_, x| x >= 2);
        assert_eq!(mask_iou(&a, &c).unwrap(), 0.0);
        // brute-force: overlap is the top-left 2x2 block, union 12 pixels
        let mut inter = 0;
        let mut uni = 0;
        for y in 0..4 {
            for x in 0..4 {
                let (p, q) = (x < 2, y < 2);
                inter += (p && q) as usize;
                uni += (p || q) as usize;
            }
        }
        assert_eq!((inter, uni), (4, 12));
        assert!((mask_iou(&a, &b).unwrap() - 4.0 / 12.0).abs() < 1e-12);
        let empty = BinaryMask::zeros(4, 4);
        assert_eq!(mask_iou(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn iou_dimension_mismatch() {
        assert!(mask_iou(&BinaryMask::zeros(2, 2), &BinaryMask::zeros(2, 3)).is_err());
    }

    #[test]
    fn tight_bbox_covers_pixels() {
        let m = BinaryMask::from_fn(8, 8, |y, x| (2..5).contains(&y) && (1..7).contains(&x));
        let b = m.tight_bbox().unwrap();
        assert_eq!((b.x1, b.y1, b.x2, b.y2), (1.0, 2.0, 7.0, 5.0));
        assert!(BinaryMask::zeros(3, 3).tight_bbox().is_none());
    }

    #[test]
    fn nearest_downsample_fixture() {
        // 4x4 GT, ROI = full box, M = 2 samples pixels (1,1),(1,3),(3,1),(3,3)
        #[rustfmt::skip]
        let bits = vec![
            1, 0, 0, 0,
            0, 1, 0, 0,
            0, 0, 0, 1,
            1, 1, 1, 0,
        ];
        let gt = BinaryMask::from_bits(4, 4, bits).unwrap();
        let roi = BBox::new(0.0f64, 0.0, 4.0, 4.0).unwrap();
        let t = crop_resample_nearest(&gt, &roi, 2);
        assert_eq!(t.bits(), &[1, 0, 1, 0]);
    }

    #[test]
    fn paste_stays_inside_box() {
        let probs = vec![0.9f64; 28 * 28];
        let bx = BBox::new(10.3, 20.0, 30.7, 41.5).unwrap();
        let m = paste_mask(&probs, 28, &bx, 64, 64, 0.5);
        for y in 0..64 {
            for x in 0..64 {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = cx >= bx.x1 && cx < bx.x2 && cy >= bx.y1 && cy < bx.y2;
                assert_eq!(m.get(y, x), inside);
            }
        }
    }
}

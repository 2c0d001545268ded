//! Continuous ROI resampling: each output cell averages bilinear samples on
//! a 2x2 grid, with no quantization of box coordinates.

use super::backbone::FeatureMap;
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::nn::Tensor;
use crate::scalar::Scalar;

pub const SAMPLING_RATIO: usize = 2;

/// Fixed-resolution crop `[C, R, R]` together with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiFeature<T> {
    pub data: Tensor<T>,
    pub source: BBox<T>,
    pub sample_id: Option<u64>,
}

impl<T: Scalar> RoiFeature<T> {
    pub fn resolution(&self) -> usize {
        self.data.shape[1]
    }
}

/// Precomputed bilinear taps for one `(map size, box, resolution)` triple;
/// reused by the forward and backward passes.
pub struct RoiSampler<T> {
    resolution: usize,
    plane: usize,
    /// `taps[cell]` holds `(flat index into one channel, weight)`.
    taps: Vec<Vec<(usize, T)>>,
}

fn bilinear_taps<T: Scalar>(y: T, x: T, h: usize, w: usize, scale: T, out: &mut Vec<(usize, T)>) {
    let (hf, wf) = (T::from_count(h), T::from_count(w));
    if y < -T::one() || y > hf || x < -T::one() || x > wf {
        return;
    }
    let mut y = y.max(T::zero());
    let mut x = x.max(T::zero());
    let mut y_lo = y.floor().to_usize().unwrap();
    let mut x_lo = x.floor().to_usize().unwrap();
    let y_hi;
    let x_hi;
    if y_lo >= h - 1 {
        y_lo = h - 1;
        y_hi = h - 1;
        y = T::from_count(y_lo);
    } else {
        y_hi = y_lo + 1;
    }
    if x_lo >= w - 1 {
        x_lo = w - 1;
        x_hi = w - 1;
        x = T::from_count(x_lo);
    } else {
        x_hi = x_lo + 1;
    }
    let ly = y - T::from_count(y_lo);
    let lx = x - T::from_count(x_lo);
    let (hy, hx) = (T::one() - ly, T::one() - lx);
    out.push((y_lo * w + x_lo, hy * hx * scale));
    out.push((y_lo * w + x_hi, hy * lx * scale));
    out.push((y_hi * w + x_lo, ly * hx * scale));
    out.push((y_hi * w + x_hi, ly * lx * scale));
}

impl<T: Scalar> RoiSampler<T> {
    pub fn new(map_height: usize, map_width: usize, stride: usize, bbox: &BBox<T>, resolution: usize) -> Result<Self> {
        bbox.validate()?;
        let tol = T::lit(1e-3);
        let (ih, iw) = (T::from_count(map_height * stride), T::from_count(map_width * stride));
        if bbox.x1 < -tol || bbox.y1 < -tol || bbox.x2 > iw + tol || bbox.y2 > ih + tol {
            return Err(Error::InvalidGeometry(format!("ROI {bbox:?} outside the image")));
        }
        let inv = T::one() / T::from_count(stride);
        let half = T::lit(0.5);
        let x1 = bbox.x1 * inv - half;
        let y1 = bbox.y1 * inv - half;
        let bin_w = bbox.width() * inv / T::from_count(resolution);
        let bin_h = bbox.height() * inv / T::from_count(resolution);
        let s = T::from_count(SAMPLING_RATIO);
        let scale = T::one() / (s * s);
        let mut taps = Vec::with_capacity(resolution * resolution);
        for ph in 0..resolution {
            for pw in 0..resolution {
                let mut cell = Vec::with_capacity(16);
                for iy in 0..SAMPLING_RATIO {
                    let y = y1 + T::from_count(ph) * bin_h + (T::from_count(iy) + half) * bin_h / s;
                    for ix in 0..SAMPLING_RATIO {
                        let x = x1 + T::from_count(pw) * bin_w + (T::from_count(ix) + half) * bin_w / s;
                        bilinear_taps(y, x, map_height, map_width, scale, &mut cell);
                    }
                }
                taps.push(cell);
            }
        }
        Ok(RoiSampler {
            resolution,
            plane: map_height * map_width,
            taps,
        })
    }

    pub fn forward(&self, fm: &Tensor<T>) -> Tensor<T> {
        let c = fm.shape[0];
        let cells = self.resolution * self.resolution;
        let mut out = Tensor::zeros(&[c, self.resolution, self.resolution]);
        for ch in 0..c {
            let src = &fm.data[ch * self.plane..(ch + 1) * self.plane];
            let dst = &mut out.data[ch * cells..(ch + 1) * cells];
            for (d, cell) in dst.iter_mut().zip(&self.taps) {
                *d = cell.iter().map(|&(i, w)| src[i] * w).sum();
            }
        }
        out
    }

    /// Scatters `grad` (shaped like the forward output) into `grad_fm`.
    pub fn backward(&self, grad: &Tensor<T>, grad_fm: &mut Tensor<T>) {
        let c = grad_fm.shape[0];
        let cells = self.resolution * self.resolution;
        for ch in 0..c {
            let g = &grad.data[ch * cells..(ch + 1) * cells];
            let dst = &mut grad_fm.data[ch * self.plane..(ch + 1) * self.plane];
            for (&gv, cell) in g.iter().zip(&self.taps) {
                if gv == T::zero() {
                    continue;
                }
                for &(i, w) in cell {
                    dst[i] += gv * w;
                }
            }
        }
    }
}

pub fn roi_align<T: Scalar>(fm: &FeatureMap<T>, bbox: &BBox<T>, resolution: usize) -> Result<RoiFeature<T>> {
    let sampler = RoiSampler::new(fm.height(), fm.width(), fm.stride, bbox, resolution)?;
    Ok(RoiFeature {
        data: sampler.forward(&fm.data),
        source: *bbox,
        sample_id: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmap(c: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f64) -> FeatureMap<f64> {
        let mut data = Tensor::zeros(&[c, h, w]);
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.data[(k * h + y) * w + x] = f(k, y, x);
                }
            }
        }
        FeatureMap { data, stride: 4 }
    }

    #[test]
    fn constant_map_gives_constant_output() {
        let fm = fmap(3, 8, 8, |_, _, _| 2.5);
        let b = BBox::new(3.2, 5.0, 27.9, 30.1).unwrap();
        for res in [7, 14] {
            let r = roi_align(&fm, &b, res).unwrap();
            assert_eq!(r.data.shape, vec![3, res, res]);
            assert!(r.data.data.iter().all(|v| (v - 2.5).abs() < 1e-12));
        }
    }

    #[test]
    fn out_of_bounds_rejected() {
        let fm = fmap(1, 8, 8, |_, _, _| 0.0);
        assert!(roi_align(&fm, &BBox::new(-5.0, 0.0, 10.0, 10.0).unwrap(), 7).is_err());
        assert!(roi_align(&fm, &BBox::new(20.0, 20.0, 40.0, 33.0).unwrap(), 7).is_err());
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        let fm = fmap(2, 6, 7, |k, y, x| (k * 31 + y * 7 + x) as f64 * 0.01);
        let b = BBox::new(1.0, 2.5, 20.0, 17.0).unwrap();
        let s = RoiSampler::new(6, 7, 4, &b, 7).unwrap();
        let out = s.forward(&fm.data);
        let g = Tensor::from_vec(&out.shape, (0..out.len()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect());
        let mut gfm = fm.data.zeros_like();
        s.backward(&g, &mut gfm);
        let lhs: f64 = out.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = fm.data.data.iter().zip(&gfm.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}

//! Axis-aligned boxes in continuous pixel coordinates and the
//! center/log-size regression parameterization used by the box heads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Corner-form box `(x1, y1, x2, y2)` with `x2 > x1` and `y2 > y1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    /// Builds from COCO `[x, y, w, h]`.
    pub fn from_xywh(x: T, y: T, w: T, h: T) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidGeometry(format!("non-finite box {self:?}")));
        }
        if self.x2 <= self.x1 || self.y2 <= self.y1 {
            return Err(Error::InvalidGeometry(format!("degenerate box {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.x1 + half * self.width(), self.y1 + half * self.height())
    }

    pub fn to_xywh(&self) -> [T; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    /// Clips to `[0, width] x [0, height]`; `None` if nothing with positive
    /// area remains.
    pub fn clip(&self, width: T, height: T) -> Option<Self> {
        let z = T::zero();
        let b = BBox {
            x1: self.x1.max(z).min(width),
            y1: self.y1.max(z).min(height),
            x2: self.x2.max(z).min(width),
            y2: self.y2.max(z).min(height),
        };
        b.validate().ok().map(|_| b)
    }

    /// True when the box lies inside `[0, width] x [0, height]`.
    pub fn within(&self, width: T, height: T) -> bool {
        self.x1 >= T::zero() && self.y1 >= T::zero() && self.x2 <= width && self.y2 <= height
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x1: U::lit(self.x1.as_f64()),
            y1: U::lit(self.y1.as_f64()),
            x2: U::lit(self.x2.as_f64()),
            y2: U::lit(self.y2.as_f64()),
        }
    }

    fn intersection(&self, other: &Self) -> T {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= T::zero() || h <= T::zero() {
            T::zero()
        } else {
            w * h
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn box_iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> Result<T> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = a.intersection(b);
    let union = a.area() + b.area() - inter;
    if union <= T::zero() {
        T::zero()
    } else {
        (inter / union).min(T::one())
    }
}

/// Regression target relative to a reference box: center offsets scaled by
/// the reference size and log size ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDelta<T> {
    pub dx: T,
    pub dy: T,
    pub dw: T,
    pub dh: T,
}

impl<T: Scalar> BoxDelta<T> {
    pub fn zero() -> Self {
        BoxDelta {
            dx: T::zero(),
            dy: T::zero(),
            dw: T::zero(),
            dh: T::zero(),
        }
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn from_array(v: [T; 4]) -> Self {
        BoxDelta {
            dx: v[0],
            dy: v[1],
            dw: v[2],
            dh: v[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

pub fn encode_box_delta<T: Scalar>(target: &BBox<T>, reference: &BBox<T>) -> Result<BoxDelta<T>> {
    target.validate()?;
    reference.validate()?;
    let (tx, ty) = target.center();
    let (rx, ry) = reference.center();
    Ok(BoxDelta {
        dx: (tx - rx) / reference.width(),
        dy: (ty - ry) / reference.height(),
        dw: (target.width() / reference.width()).ln(),
        dh: (target.height() / reference.height()).ln(),
    })
}

pub fn decode_box_delta<T: Scalar>(delta: &BoxDelta<T>, reference: &BBox<T>) -> Result<BBox<T>> {
    if !delta.is_finite() {
        return Err(Error::NonFinite(format!("box delta {delta:?}")));
    }
    reference.validate()?;
    let (rx, ry) = reference.center();
    let cx = rx + delta.dx * reference.width();
    let cy = ry + delta.dy * reference.height();
    let w = reference.width() * delta.dw.exp();
    let h = reference.height() * delta.dh.exp();
    let half = T::lit(0.5);
    BBox::new(cx - half * w, cy - half * h, cx + half * w, cy + half * h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox<f64> {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(box_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(box_iou(&a, &b(20.0, 20.0, 30.0, 30.0)).unwrap(), 0.0);
        let v = box_iou(&a, &b(5.0, 5.0, 15.0, 15.0)).unwrap();
        assert!((v - 25.0 / 175.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        let bad = BBox {
            x1: 0.0,
            y1: 0.0,
            x2: 0.0,
            y2: 5.0,
        };
        assert!(matches!(
            box_iou(&bad, &b(0.0, 0.0, 1.0, 1.0)),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn delta_examples() {
        let r = b(0.0, 0.0, 10.0, 10.0);
        let d = encode_box_delta(&r, &r).unwrap();
        assert_eq!(d, BoxDelta::zero());
        let d = encode_box_delta(&b(0.0, 0.0, 20.0, 10.0), &r).unwrap();
        assert!((d.dw - 2f64.ln()).abs() < 1e-12);
        assert!((d.dx - 0.5).abs() < 1e-12);
        assert_eq!(d.dy, 0.0);
        assert_eq!(d.dh, 0.0);
    }

    #[test]
    fn decode_rejects_non_finite() {
        let d = BoxDelta {
            dx: f64::NAN,
            dy: 0.0,
            dw: 0.0,
            dh: 0.0,
        };
        assert!(decode_box_delta(&d, &b(0.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn clip_drops_outside() {
        assert!(b(-10.0, -10.0, -1.0, -1.0).clip(5.0, 5.0).is_none());
        let c = b(-2.0, 1.0, 8.0, 4.0).clip(5.0, 5.0).unwrap();
        assert_eq!(c, b(0.0, 1.0, 5.0, 4.0));
    }
}

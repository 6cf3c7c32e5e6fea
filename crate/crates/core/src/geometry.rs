//! Axis-aligned box arithmetic.
//!
//! Boxes are `[x, y, w, h]` with `(x, y)` the top-left corner and continuous
//! interval semantics `[x, x + w) x [y, y + h)`. A missing prediction (or an
//! annotated absence) is represented as `None` in a [`MaybeBox`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box has non-finite coordinate")]
    NonFinite,
    #[error("box has negative size (w={w}, h={h})")]
    NegativeSize { w: f64, h: f64 },
    #[error("ground-truth box has zero width or height")]
    DegenerateGroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// A per-frame box that may be missing.
pub type MaybeBox = Option<BBox>;

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if w < 0.0 || h < 0.0 {
            return Err(GeometryError::NegativeSize { w, h });
        }
        Ok(Self { x, y, w, h })
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// True when the box has strictly positive width and height.
    pub fn is_proper(&self) -> bool {
        self.w > 0.0 && self.h > 0.0
    }

    /// Multiplies every coordinate by `s` (scaling about the image origin).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            x: self.x * s,
            y: self.y * s,
            w: self.w * s,
            h: self.h * s,
        }
    }

    /// Resizes the box by `s` about its own center.
    pub fn resized_about_center(&self, s: f64) -> Self {
        let (cx, cy) = self.center();
        let w = self.w * s;
        let h = self.h * s;
        Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }
}

/// Intersection over union. Two zero-area boxes score 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return if a.is_proper() { 1.0 } else { 0.0 };
    }
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    let inter = if ix > 0.0 && iy > 0.0 { ix * iy } else { 0.0 };
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers.
pub fn center_error(a: &BBox, b: &BBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Center offset normalized per axis by the ground-truth size.
pub fn norm_center_error(pred: &BBox, gt: &BBox) -> Result<f64, GeometryError> {
    if !gt.is_proper() {
        return Err(GeometryError::DegenerateGroundTruth);
    }
    let (px, py) = pred.center();
    let (gx, gy) = gt.center();
    Ok(((px - gx) / gt.w).hypot((py - gy) / gt.h))
}

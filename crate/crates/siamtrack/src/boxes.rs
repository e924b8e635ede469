//! Box geometry: IoU, anchor grids, delta encoding, NMS, clipping.
//!
//! All coordinates are continuous `f64` pixels in corner form
//! `(x1, y1, x2, y2)` with `x2 > x1`, `y2 > y1`; rounding only ever happens at
//! serialization boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("invalid box ({x1}, {y1}, {x2}, {y2}): sides must be positive")]
    Degenerate { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("{boxes} boxes but {scores} scores")]
    LengthMismatch { boxes: usize, scores: usize },
}

/// Axis-aligned box in pixel coordinates, corner form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, BoxError> {
        if !(x2 > x1 && y2 > y1) || !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(BoxError::Degenerate { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Build from center form `(cx, cy, w, h)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, BoxError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    /// Build from top-left + size `(x, y, w, h)`, the ground-truth file convention.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, BoxError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// `(x, y, w, h)` top-left + size form.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }
}

/// Faster-R-CNN-style box offsets relative to an anchor: center offsets
/// normalized by the anchor size and log size ratios.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoxDelta {
    pub dx: f64,
    pub dy: f64,
    pub dw: f64,
    pub dh: f64,
}

impl BoxDelta {
    pub fn as_array(&self) -> [f64; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            dx: a[0],
            dy: a[1],
            dw: a[2],
            dh: a[3],
        }
    }
}

/// Intersection-over-union of two boxes; zero when disjoint.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Regular grid of anchor boxes: `ratios.len()` anchors per cell, each with
/// area `base_size^2` and aspect ratio `w/h = ratio`. Anchor `(i, j, a)` is
/// stored at index `(i * grid_w + j) * ratios.len() + a` and is centered at
/// `((j + 0.5) * stride, (i + 0.5) * stride)`.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    pub anchors: Vec<BBox>,
    pub grid_h: usize,
    pub grid_w: usize,
    pub stride: usize,
    pub ratios: Vec<f64>,
    pub base_size: f64,
}

impl AnchorGrid {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.ratios.len()
    }

    /// Shift every anchor by `(dx, dy)`. Used to align the grid with the
    /// receptive-field centers of a correlation response map.
    pub fn translate(&self, dx: f64, dy: f64) -> AnchorGrid {
        let anchors = self
            .anchors
            .iter()
            .map(|b| BBox {
                x1: b.x1 + dx,
                y1: b.y1 + dy,
                x2: b.x2 + dx,
                y2: b.y2 + dy,
            })
            .collect();
        AnchorGrid {
            anchors,
            ..self.clone()
        }
    }
}

pub fn generate_anchors(
    grid_h: usize,
    grid_w: usize,
    stride: usize,
    base_size: f64,
    ratios: &[f64],
) -> AnchorGrid {
    assert!(grid_h > 0 && grid_w > 0 && stride > 0 && base_size > 0.0 && !ratios.is_empty());
    let mut anchors = Vec::with_capacity(grid_h * grid_w * ratios.len());
    for i in 0..grid_h {
        for j in 0..grid_w {
            let cx = (j as f64 + 0.5) * stride as f64;
            let cy = (i as f64 + 0.5) * stride as f64;
            for &r in ratios {
                let w = base_size * r.sqrt();
                let h = base_size / r.sqrt();
                anchors.push(BBox {
                    x1: cx - w / 2.0,
                    y1: cy - h / 2.0,
                    x2: cx + w / 2.0,
                    y2: cy + h / 2.0,
                });
            }
        }
    }
    AnchorGrid {
        anchors,
        grid_h,
        grid_w,
        stride,
        ratios: ratios.to_vec(),
        base_size,
    }
}

/// Encode `gt` relative to `anchor`.
pub fn encode_delta(gt: &BBox, anchor: &BBox) -> BoxDelta {
    let (gcx, gcy) = gt.center();
    let (acx, acy) = anchor.center();
    BoxDelta {
        dx: (gcx - acx) / anchor.width(),
        dy: (gcy - acy) / anchor.height(),
        dw: (gt.width() / anchor.width()).ln(),
        dh: (gt.height() / anchor.height()).ln(),
    }
}

/// Exact inverse of [`encode_delta`].
pub fn decode_delta(anchor: &BBox, d: &BoxDelta) -> BBox {
    let (acx, acy) = anchor.center();
    let cx = acx + d.dx * anchor.width();
    let cy = acy + d.dy * anchor.height();
    let w = anchor.width() * d.dw.exp();
    let h = anchor.height() * d.dh.exp();
    BBox {
        x1: cx - w / 2.0,
        y1: cy - h / 2.0,
        x2: cx + w / 2.0,
        y2: cy + h / 2.0,
    }
}

/// Greedy non-maximum suppression. Returns kept indices in descending score
/// order; the highest-scoring remaining box is kept and every remaining box
/// with IoU strictly above `iou_threshold` against it is discarded. Score
/// ties break toward the lower original index.
pub fn nms(boxes: &[BBox], scores: &[f64], iou_threshold: f64) -> Result<Vec<usize>, BoxError> {
    if boxes.len() != scores.len() {
        return Err(BoxError::LengthMismatch {
            boxes: boxes.len(),
            scores: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; boxes.len()];
    let mut keep = Vec::new();
    for (pos, &idx) in order.iter().enumerate() {
        if suppressed[idx] {
            continue;
        }
        keep.push(idx);
        for &other in &order[pos + 1..] {
            if !suppressed[other] && iou(&boxes[idx], &boxes[other]) > iou_threshold {
                suppressed[other] = true;
            }
        }
    }
    Ok(keep)
}

/// Clamp a box to `[0, width] x [0, height]`. If clamping collapses a side,
/// that side becomes a 1-pixel span pinned at the nearest edge.
pub fn clip_box(b: &BBox, width: f64, height: f64) -> BBox {
    assert!(width > 0.0 && height > 0.0, "bounds must be positive");
    let clip_side = |lo: f64, hi: f64, limit: f64| -> (f64, f64) {
        let c_lo = lo.clamp(0.0, limit);
        let c_hi = hi.clamp(0.0, limit);
        if c_hi - c_lo >= 1.0 {
            (c_lo, c_hi)
        } else {
            let mid = ((c_lo + c_hi) / 2.0).clamp(0.5, limit - 0.5);
            (mid - 0.5, mid + 0.5)
        }
    };
    let (x1, x2) = clip_side(b.x1, b.x2, width);
    let (y1, y2) = clip_side(b.y1, b.y2, height);
    BBox { x1, y1, x2, y2 }
}

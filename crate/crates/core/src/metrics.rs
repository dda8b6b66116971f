//! Offline metrics: direction agreement for 3D actions, normalized pixel
//! error for 2D targets, and box accuracy for referring-expression data.

use serde::{Deserialize, Serialize};

use crate::space::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("vectors have different lengths ({0} and {1})")]
    DimensionMismatch(usize, usize),
    #[error("bounding box must have positive width and height")]
    DegenerateBox,
}

/// `dot(pred, reference) / (‖pred‖ · ‖reference‖)`, clamped to [-1, 1].
pub fn cosine_metric(pred: &Action, reference: &Action) -> Result<f64, MetricError> {
    let (a, b) = (pred.as_slice(), reference.as_slice());
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    // One square root keeps exact cases exact; fall back if the product
    // leaves the normal range.
    let prod = na2 * nb2;
    let denom = if prod.is_normal() { libm::sqrt(prod) } else { libm::sqrt(na2) * libm::sqrt(nb2) };
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Pixel distance divided by the image width.
pub fn normalized_l2(pred_px: [f64; 2], truth_px: [f64; 2], image_w: f64) -> f64 {
    libm::hypot(pred_px[0] - truth_px[0], pred_px[1] - truth_px[1]) / image_w
}

/// Axis-aligned box in pixels, `(x, y)` the top-left corner. Serialized as
/// `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.w > 0.0 && self.h > 0.0 && self.x.is_finite() && self.y.is_finite() {
            Ok(())
        } else {
            Err(MetricError::DegenerateBox)
        }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x + self.w / 2.0, self.y + self.h / 2.0]
    }

    /// Closed containment: the boundary counts as inside.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x && p[0] <= self.x + self.w && p[1] >= self.y && p[1] <= self.y + self.h
    }

    /// Grows the box by `margin` on every side.
    pub fn dilate(&self, margin: f64) -> Self {
        Self { x: self.x - margin, y: self.y - margin, w: self.w + 2.0 * margin, h: self.h + 2.0 * margin }
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBoxScore {
    pub hit: bool,
    /// Distance to the box center over the image width.
    pub center_distance: f64,
}

pub fn bbox_metrics(pred_px: [f64; 2], bbox: &BBox, image_w: f64) -> BBoxScore {
    BBoxScore { hit: bbox.contains(pred_px), center_distance: normalized_l2(pred_px, bbox.center(), image_w) }
}

/// Ground truth attached to an evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "truth_kind", content = "truth", rename_all = "lowercase")]
pub enum Truth {
    /// Reference action in the same frame as the predictions; scored by cosine.
    Action(Action),
    /// Target pixel; scored by normalized L2.
    Pixel([f64; 2]),
    /// Target box; scored by hit rate.
    Bbox(BBox),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Cosine,
    NormalizedL2,
    BboxHit,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Cosine => "cosine",
            MetricKind::NormalizedL2 => "normalized-l2",
            MetricKind::BboxHit => "bbox-hit",
        }
    }

    /// Worst-case value recorded when a run fails on a record.
    pub fn penalty(self) -> f64 {
        match self {
            MetricKind::Cosine => -1.0,
            MetricKind::NormalizedL2 => 1.0,
            MetricKind::BboxHit => 0.0,
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::NormalizedL2)
    }
}

impl Truth {
    pub fn metric(&self) -> MetricKind {
        match self {
            Truth::Action(_) => MetricKind::Cosine,
            Truth::Pixel(_) => MetricKind::NormalizedL2,
            Truth::Bbox(_) => MetricKind::BboxHit,
        }
    }

    /// Pixel the synthetic oracles should aim for, if the truth is in pixels.
    pub fn target_px(&self) -> Option<[f64; 2]> {
        match self {
            Truth::Action(_) => None,
            Truth::Pixel(p) => Some(*p),
            Truth::Bbox(b) => Some(b.center()),
        }
    }

    /// Scores a predicted action. Pixel truths compare against the first two
    /// action components.
    pub fn score(&self, pred: &Action, image_w: f64) -> Result<f64, MetricError> {
        let px = || {
            let a = pred.as_slice();
            [a.first().copied().unwrap_or(0.0), a.get(1).copied().unwrap_or(0.0)]
        };
        match self {
            Truth::Action(r) => cosine_metric(pred, r),
            Truth::Pixel(t) => Ok(normalized_l2(px(), *t, image_w)),
            Truth::Bbox(b) => {
                b.validate()?;
                Ok(if bbox_metrics(px(), b, image_w).hit { 1.0 } else { 0.0 })
            }
        }
    }
}

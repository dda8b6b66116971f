//! Visual prompt rendering: turns an observation plus candidate actions into
//! an annotated image with numbered, depth-styled arrows and the matching
//! label → action table.

pub mod dataset;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::raster::{Raster, Rgb};
use crate::space::{Action, ArrowGeometry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotateError {
    #[error("no candidates to annotate")]
    EmptyCandidateSet,
    #[error("depth {depth} outside [{z_min}, {z_max}]")]
    OutOfRangeDepth { depth: f64, z_min: f64, z_max: f64 },
    #[error("non-zero depths need z_min < z_max, got [{0}, {1}]")]
    InvalidDepthRange(f64, f64),
    #[error("invalid annotation style: {0}")]
    InvalidStyle(&'static str),
}

/// Radius multiplier at the far end (`z_max`) of the depth spectrum.
pub const FAR_RADIUS_SCALE: f64 = 0.6;
/// Radius multiplier at the near end (`z_min`) of the depth spectrum.
pub const NEAR_RADIUS_SCALE: f64 = 1.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationStyle {
    pub arrow_thickness_px: u32,
    pub arrowhead_ratio: f64,
    pub label_radius_px: f64,
    /// Color for the most backward (toward the camera) motion.
    pub color_near: Rgb,
    /// Color for the most forward (away from the camera) motion.
    pub color_far: Rgb,
    pub font_height_px: u32,
    pub min_spacing_px: f64,
}

impl Default for AnnotationStyle {
    fn default() -> Self {
        Self {
            arrow_thickness_px: 2,
            arrowhead_ratio: 0.2,
            label_radius_px: 13.0,
            color_near: Rgb::BLUE,
            color_far: Rgb::RED,
            font_height_px: 14,
            min_spacing_px: 20.0,
        }
    }
}

impl AnnotationStyle {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.arrow_thickness_px < 1 {
            return Err(AnnotateError::InvalidStyle("arrow_thickness_px must be at least 1"));
        }
        if !(self.arrowhead_ratio > 0.0 && self.arrowhead_ratio <= 1.0) {
            return Err(AnnotateError::InvalidStyle("arrowhead_ratio must lie in (0, 1]"));
        }
        if !(self.label_radius_px >= f64::from(self.font_height_px) / 2.0) {
            return Err(AnnotateError::InvalidStyle("label_radius_px must be at least font_height_px / 2"));
        }
        if !(self.min_spacing_px >= 0.0) {
            return Err(AnnotateError::InvalidStyle("min_spacing_px must be non-negative"));
        }
        Ok(())
    }
}

/// One candidate to draw: its action and the arrow(s) representing it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub action: Action,
    pub geometries: Vec<ArrowGeometry>,
}

impl Candidate {
    /// Where the candidate's numbered circle sits.
    pub fn label_center(&self) -> Option<[f64; 2]> {
        self.geometries.last().map(|g| g.end_px)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub pixels: Raster,
    pub labels: BTreeMap<u32, Action>,
    pub geometries: Vec<ArrowGeometry>,
}

impl AnnotatedImage {
    pub fn label_ids(&self) -> Vec<u32> {
        self.labels.keys().copied().collect()
    }

    pub fn action(&self, label: u32) -> Option<&Action> {
        self.labels.get(&label)
    }
}

/// Color and circle radius for a forward component `depth`.
///
/// Linear between the endpoints: `z_min` is drawn in `color_near` at 1.4× the
/// base radius, `z_max` in `color_far` at 0.6×. A zero-width range maps every
/// depth to the midpoint.
pub fn depth_to_style(
    depth: f64,
    z_min: f64,
    z_max: f64,
    style: &AnnotationStyle,
) -> Result<(Rgb, f64), AnnotateError> {
    let t = depth_fraction(depth, z_min, z_max)?;
    let color = style.color_near.lerp(style.color_far, t);
    let scale = NEAR_RADIUS_SCALE + (FAR_RADIUS_SCALE - NEAR_RADIUS_SCALE) * t;
    Ok((color, style.label_radius_px * scale))
}

fn depth_fraction(depth: f64, z_min: f64, z_max: f64) -> Result<f64, AnnotateError> {
    let span = z_max - z_min;
    let slack = 1e-12 * (1.0 + z_min.abs().max(z_max.abs()));
    if !(depth >= z_min - slack && depth <= z_max + slack) {
        return Err(AnnotateError::OutOfRangeDepth { depth, z_min, z_max });
    }
    if span <= 0.0 {
        return Ok(0.5);
    }
    Ok(((depth - z_min) / span).clamp(0.0, 1.0))
}

/// Greedy, order-stable spacing filter: keeps point `i` iff it is at least
/// `min_spacing` away from every point kept before it.
pub fn enforce_spacing(centers: &[[f64; 2]], min_spacing: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::with_capacity(centers.len());
    for (i, c) in centers.iter().enumerate() {
        if kept.iter().all(|&k| spaced(centers[k], *c, min_spacing)) {
            kept.push(i);
        }
    }
    kept
}

pub(crate) fn spaced(a: [f64; 2], b: [f64; 2], min_spacing: f64) -> bool {
    libm::hypot(a[0] - b[0], a[1] - b[1]) >= min_spacing
}

/// Draws the candidates onto a copy of `image`.
///
/// Candidates are numbered `1..=n` in the order given; any label ids already
/// present on the geometries are overwritten so the oracle always sees
/// consecutive labels.
pub fn render(
    image: &Raster,
    candidates: &[Candidate],
    depth_range: (f64, f64),
    style: &AnnotationStyle,
) -> Result<AnnotatedImage, AnnotateError> {
    if candidates.is_empty() {
        return Err(AnnotateError::EmptyCandidateSet);
    }
    let (z_min, z_max) = depth_range;
    let any_depth = candidates.iter().flat_map(|c| &c.geometries).any(|g| g.depth != 0.0);
    if any_depth && !(z_min < z_max) {
        return Err(AnnotateError::InvalidDepthRange(z_min, z_max));
    }

    let mut labels = BTreeMap::new();
    let mut geometries = Vec::new();
    let mut styled = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        let label = i as u32 + 1;
        labels.insert(label, cand.action.clone());
        for g in &cand.geometries {
            let mut g = *g;
            g.label_id = label;
            let (color, radius) = depth_to_style(g.depth, z_min, z_max, style)?;
            styled.push((g, color, radius));
            geometries.push(g);
        }
    }

    let mut pixels = image.clone();
    let thickness = f64::from(style.arrow_thickness_px);
    for (g, color, radius) in &styled {
        let len = g.length();
        if len <= *radius {
            continue;
        }
        let t = (len - radius) / len;
        let tip =
            [g.start_px[0] + (g.end_px[0] - g.start_px[0]) * t, g.start_px[1] + (g.end_px[1] - g.start_px[1]) * t];
        pixels.draw_arrow(g.start_px, tip, thickness, style.arrowhead_ratio, *color);
    }
    let outline = thickness.max(2.0);
    for (g, color, radius) in &styled {
        pixels.fill_circle(g.end_px, *radius, Rgb::WHITE);
        pixels.stroke_circle(g.end_px, *radius, outline, *color);
        let font = libm::round(f64::from(style.font_height_px) * radius / style.label_radius_px) as u32;
        pixels.draw_number(g.end_px, &format!("{}", g.label_id), font.min(style.font_height_px), Rgb::BLACK);
    }

    Ok(AnnotatedImage { pixels, labels, geometries })
}

#[cfg(test)]
mod tests {
    use alloc::vec;

    use super::*;
    use crate::space::{action_to_geometry, ActionSpaceSpec, ArrowRole, CameraModel, Extrinsic, ImageSize};

    fn arrow(end: [f64; 2], depth: f64) -> ArrowGeometry {
        ArrowGeometry {
            start_px: [50.0, 99.0],
            end_px: end,
            depth,
            label_id: 0,
            role: ArrowRole::Direct,
            clipped: false,
        }
    }

    fn cand(end: [f64; 2], depth: f64) -> Candidate {
        Candidate { action: Action::new(vec![end[0], end[1]]), geometries: vec![arrow(end, depth)] }
    }

    #[test]
    fn depth_style_endpoints() {
        let s = AnnotationStyle::default();
        let (c, r) = depth_to_style(0.3, -0.3, 0.3, &s).unwrap();
        assert_eq!((c, r), (Rgb::RED, 0.6 * s.label_radius_px));
        let (c, r) = depth_to_style(-0.3, -0.3, 0.3, &s).unwrap();
        assert_eq!((c, r), (Rgb::BLUE, 1.4 * s.label_radius_px));
        let (c, r) = depth_to_style(0.0, -0.3, 0.3, &s).unwrap();
        assert_eq!((c, r), (Rgb([128, 0, 128]), s.label_radius_px));
    }

    #[test]
    fn depth_style_rejects_out_of_range() {
        let s = AnnotationStyle::default();
        assert!(matches!(depth_to_style(0.5, -0.3, 0.3, &s), Err(AnnotateError::OutOfRangeDepth { .. })));
    }

    #[test]
    fn empty_candidates_rejected() {
        let img = Raster::new(10, 10, Rgb::WHITE);
        assert_eq!(render(&img, &[], (0.0, 0.0), &AnnotationStyle::default()), Err(AnnotateError::EmptyCandidateSet));
    }

    #[test]
    fn single_zero_depth_arrow() {
        let img = Raster::new(100, 100, Rgb::WHITE);
        let s = AnnotationStyle::default();
        let out = render(&img, &[cand([50.0, 30.0], 0.0)], (0.0, 0.0), &s).unwrap();
        assert_eq!(out.label_ids(), vec![1]);
        assert_eq!(out.geometries[0].label_id, 1);
        // The ring at the label is the midpoint purple, the base image is untouched.
        let ring = out.pixels.get(50, libm::ceil(30.0 - s.label_radius_px) as u32).unwrap();
        assert_eq!(ring, Rgb([128, 0, 128]));
        assert!(img.as_bytes().iter().all(|&b| b == 255));
    }

    #[test]
    fn ten_nav_arrows_get_ten_labels() {
        let img = Raster::new(320, 240, Rgb::WHITE);
        let cands: Vec<_> = (0..10).map(|i| cand([15.0 + 30.0 * i as f64, 40.0], 0.0)).collect();
        let out = render(&img, &cands, (0.0, 0.0), &AnnotationStyle::default()).unwrap();
        assert_eq!(out.label_ids(), (1..=10).collect::<Vec<_>>());
        for (i, c) in cands.iter().enumerate() {
            assert_eq!(out.action(i as u32 + 1), Some(&c.action));
        }
    }

    #[test]
    fn spectrum_endpoints_style_markers() {
        let img = Raster::new(200, 100, Rgb::WHITE);
        let s = AnnotationStyle::default();
        let out = render(&img, &[cand([50.0, 40.0], -1.0), cand([150.0, 40.0], 1.0)], (-1.0, 1.0), &s).unwrap();
        // Outline pixel just inside each circle's radius on the top edge.
        let near_r = 1.4 * s.label_radius_px;
        let far_r = 0.6 * s.label_radius_px;
        assert_eq!(out.pixels.get(50, libm::ceil(40.0 - near_r) as u32), Some(Rgb::BLUE));
        assert_eq!(out.pixels.get(150, libm::ceil(40.0 - far_r) as u32), Some(Rgb::RED));
        // Just outside the far (small) circle is background, not outline.
        assert_eq!(out.pixels.get(150, (40.0 - far_r - 1.5) as u32), Some(Rgb::WHITE));
    }

    #[test]
    fn depth_without_range_is_rejected() {
        let img = Raster::new(50, 50, Rgb::WHITE);
        let r = render(&img, &[cand([10.0, 10.0], 0.2)], (0.0, 0.0), &AnnotationStyle::default());
        assert!(matches!(r, Err(AnnotateError::InvalidDepthRange(..))));
    }

    #[test]
    fn render_is_deterministic() {
        let img = Raster::new(120, 90, Rgb([30, 60, 90]));
        let cands = [cand([20.0, 20.0], 0.1), cand([90.0, 60.0], -0.2)];
        let a = render(&img, &cands, (-0.3, 0.3), &AnnotationStyle::default()).unwrap();
        let b = render(&img, &cands, (-0.3, 0.3), &AnnotationStyle::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spacing_examples() {
        assert_eq!(enforce_spacing(&[[5.0, 5.0]; 5], 3.0), vec![0]);
        assert_eq!(enforce_spacing(&[[5.0, 5.0]; 5], 0.0), vec![0, 1, 2, 3, 4]);
        // 10 px apart on a line with 15 px minimum: 0 keeps, 10 too close, 20 keeps...
        let line: Vec<_> = (0..7).map(|i| [10.0 * i as f64, 0.0]).collect();
        assert_eq!(enforce_spacing(&line, 15.0), vec![0, 2, 4, 6]);
    }

    #[test]
    fn labels_round_trip_to_geometry() {
        let cam = CameraModel::new(400.0, 400.0, 160.0, 120.0, ImageSize::new(320, 240), Extrinsic::IDENTITY).unwrap();
        let spec = ActionSpaceSpec::cart3d([-0.2; 3], [0.2; 3], [0.0, 0.0, 1.0]);
        let actions = [vec![0.1, 0.05, 0.0], vec![-0.15, 0.0, 0.2], vec![0.0, -0.1, -0.2]];
        let cands: Vec<_> = actions
            .iter()
            .map(|a| {
                let a = Action::new(a.clone());
                Candidate {
                    geometries: action_to_geometry(&spec, Some(&cam), cam.image_size(), &a, 99).unwrap(),
                    action: a,
                }
            })
            .collect();
        let img = Raster::new(320, 240, Rgb::WHITE);
        let out = render(&img, &cands, spec.depth_range(Some(&cam)), &AnnotationStyle::default()).unwrap();
        for g in &out.geometries {
            let a = out.action(g.label_id).unwrap();
            let again = action_to_geometry(&spec, Some(&cam), cam.image_size(), a, g.label_id).unwrap();
            assert_eq!(again[0], *g);
        }
    }
}

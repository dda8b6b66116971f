//! Action spaces, camera projection, and the mapping from candidate actions
//! to the arrows drawn on the observation image.
//!
//! Pixel conventions: `u` grows to the right, `v` grows downward, and pixel
//! centers sit on integer coordinates, so the drawable box of a `w × h` image
//! is `[0, w - 1] × [0, h - 1]`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("action has {got} components, the space expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point lies at non-positive camera depth {0}")]
    NonPositiveDepth(f64),
    #[error("cart3d actions need a camera model")]
    MissingCamera,
    #[error("invalid action space: {0}")]
    InvalidSpace(&'static str),
    #[error("invalid camera model: {0}")]
    InvalidCamera(&'static str),
}

/// Which family of action a space describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceKind {
    /// Navigation target pixel `(u, v)`.
    Nav2d,
    /// Relative end-effector displacement `(x, y, z)` in meters.
    Cart3d,
    /// Pick pixel followed by place pixel `(pick_u, pick_v, place_u, place_v)`.
    Pickplace,
    /// A point of interest `(u, v)` on the image.
    Keypoint2d,
}

impl SpaceKind {
    pub const fn dims(self) -> usize {
        match self {
            SpaceKind::Nav2d | SpaceKind::Keypoint2d => 2,
            SpaceKind::Cart3d => 3,
            SpaceKind::Pickplace => 4,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            SpaceKind::Nav2d => "nav2d",
            SpaceKind::Cart3d => "cart3d",
            SpaceKind::Pickplace => "pickplace",
            SpaceKind::Keypoint2d => "keypoint2d",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where arrows start on the image for the 2D spaces.
///
/// Cart3d spaces always start at the projection of the end effector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum OriginMode {
    #[default]
    ImageBottomCenter,
    ImageCenter,
    EndEffectorPixel {
        u: f64,
        v: f64,
    },
}

/// How the height component of a cart3d action is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeightMode {
    /// Height is sampled like any other component and shows up through the
    /// depth color grading.
    #[default]
    ColorGrading,
    /// The height component (index 2) is pinned to zero.
    FixedHeight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn max_u(&self) -> f64 {
        f64::from(self.width.saturating_sub(1))
    }

    pub fn max_v(&self) -> f64 {
        f64::from(self.height.saturating_sub(1))
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= self.max_u() && p[1] <= self.max_v()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpaceSpec {
    pub kind: SpaceKind,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub origin: OriginMode,
    /// Gripper open/close intent; carried as metadata and expressed in the
    /// prompt text, never sampled.
    #[serde(default)]
    pub gripper_flag: bool,
    #[serde(default)]
    pub height: HeightMode,
    /// End-effector position in the action frame (cart3d only).
    #[serde(default)]
    pub end_effector: [f64; 3],
}

impl ActionSpaceSpec {
    /// Navigation over the full image with arrows from the bottom center.
    pub fn nav2d(image: ImageSize) -> Self {
        Self::pixel_space(SpaceKind::Nav2d, image, OriginMode::ImageBottomCenter)
    }

    pub fn keypoint2d(image: ImageSize) -> Self {
        Self::pixel_space(SpaceKind::Keypoint2d, image, OriginMode::ImageCenter)
    }

    pub fn pickplace(image: ImageSize) -> Self {
        Self::pixel_space(SpaceKind::Pickplace, image, OriginMode::ImageCenter)
    }

    pub fn cart3d(lower: [f64; 3], upper: [f64; 3], end_effector: [f64; 3]) -> Self {
        Self {
            kind: SpaceKind::Cart3d,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            origin: OriginMode::ImageCenter,
            gripper_flag: false,
            height: HeightMode::ColorGrading,
            end_effector,
        }
    }

    fn pixel_space(kind: SpaceKind, image: ImageSize, origin: OriginMode) -> Self {
        let (mu, mv) = (image.max_u(), image.max_v());
        let (lower, upper) = match kind {
            SpaceKind::Pickplace => (vec![0.0; 4], vec![mu, mv, mu, mv]),
            _ => (vec![0.0; 2], vec![mu, mv]),
        };
        Self {
            kind,
            lower,
            upper,
            origin,
            gripper_flag: false,
            height: HeightMode::ColorGrading,
            end_effector: [0.0; 3],
        }
    }

    pub fn with_origin(mut self, origin: OriginMode) -> Self {
        self.origin = origin;
        self
    }

    /// Checks the structural invariants.
    ///
    /// A dimension with `lower == upper` is accepted and treated as frozen,
    /// but at least one dimension must have positive extent.
    pub fn validate(&self) -> Result<(), SpaceError> {
        let dims = self.kind.dims();
        if self.lower.len() != dims || self.upper.len() != dims {
            return Err(SpaceError::InvalidSpace("bounds length does not match the space kind"));
        }
        if self.lower.iter().chain(&self.upper).chain(&self.end_effector).any(|v| !v.is_finite()) {
            return Err(SpaceError::InvalidSpace("bounds must be finite"));
        }
        if self.lower.iter().zip(&self.upper).any(|(lo, hi)| lo > hi) {
            return Err(SpaceError::InvalidSpace("lower bound exceeds upper bound"));
        }
        if self.max_extent() <= 0.0 {
            return Err(SpaceError::InvalidSpace("every dimension is frozen"));
        }
        if self.gripper_flag && self.kind != SpaceKind::Cart3d {
            return Err(SpaceError::InvalidSpace("gripper flag is only meaningful for cart3d"));
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.kind.dims()
    }

    /// Bounds of dimension `i`, after applying the height mode.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        if self.pins_height(i) {
            let pinned = 0.0_f64.clamp(self.lower[i], self.upper[i]);
            (pinned, pinned)
        } else {
            (self.lower[i], self.upper[i])
        }
    }

    fn pins_height(&self, i: usize) -> bool {
        self.kind == SpaceKind::Cart3d && self.height == HeightMode::FixedHeight && i == 2
    }

    pub fn extent(&self, i: usize) -> f64 {
        let (lo, hi) = self.bounds(i);
        hi - lo
    }

    pub fn max_extent(&self) -> f64 {
        (0..self.dims()).map(|i| self.extent(i)).fold(0.0, f64::max)
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.extent(i) <= 0.0
    }

    pub fn active_dims(&self) -> usize {
        (0..self.dims()).filter(|&i| !self.is_frozen(i)).count()
    }

    pub fn midpoint(&self) -> Action {
        Action::new(
            (0..self.dims())
                .map(|i| {
                    let (lo, hi) = self.bounds(i);
                    0.5 * (lo + hi)
                })
                .collect(),
        )
    }

    pub fn check_dims(&self, action: &Action) -> Result<(), SpaceError> {
        if action.len() != self.dims() {
            return Err(SpaceError::DimensionMismatch { expected: self.dims(), got: action.len() });
        }
        Ok(())
    }

    pub fn contains(&self, action: &Action) -> bool {
        action.len() == self.dims()
            && action.components.iter().enumerate().all(|(i, &x)| {
                let (lo, hi) = self.bounds(i);
                x >= lo && x <= hi
            })
    }

    /// Clips every component to its bounds. Idempotent.
    pub fn clamp(&self, action: &Action) -> Result<Action, SpaceError> {
        self.check_dims(action)?;
        Ok(Action::new(
            action
                .components
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    let (lo, hi) = self.bounds(i);
                    if x.is_nan() {
                        0.5 * (lo + hi)
                    } else {
                        x.clamp(lo, hi)
                    }
                })
                .collect(),
        ))
    }

    /// Range of the camera-frame forward component over the whole space.
    ///
    /// Zero-width for every space except cart3d.
    pub fn depth_range(&self, camera: Option<&CameraModel>) -> (f64, f64) {
        match (self.kind, camera) {
            (SpaceKind::Cart3d, Some(cam)) => {
                let row = cam.extrinsic.rotation_row(2);
                let mut lo = 0.0;
                let mut hi = 0.0;
                for (i, r) in row.iter().enumerate() {
                    let (a, b) = self.bounds(i);
                    lo += f64::min(r * a, r * b);
                    hi += f64::max(r * a, r * b);
                }
                (lo, hi)
            }
            _ => (0.0, 0.0),
        }
    }
}

/// A point in an action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action {
    pub components: Vec<f64>,
}

impl Action {
    pub fn new(components: Vec<f64>) -> Self {
        Self { components }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    pub fn distance(&self, other: &Action) -> f64 {
        libm::sqrt(self.components.iter().zip(&other.components).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }
}

impl From<Vec<f64>> for Action {
    fn from(components: Vec<f64>) -> Self {
        Self::new(components)
    }
}

/// Rigid transform from the action frame into the camera frame, stored as a
/// row-major 4×4 homogeneous matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExtrinsicRepr", into = "ExtrinsicRepr")]
pub struct Extrinsic(pub [[f64; 4]; 4]);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExtrinsicRepr {
    Nested([[f64; 4]; 4]),
    Flat(Vec<f64>),
}

impl TryFrom<ExtrinsicRepr> for Extrinsic {
    type Error = &'static str;

    fn try_from(repr: ExtrinsicRepr) -> Result<Self, Self::Error> {
        match repr {
            ExtrinsicRepr::Nested(m) => Ok(Extrinsic(m)),
            ExtrinsicRepr::Flat(v) => {
                if v.len() != 16 {
                    return Err("extrinsic must have 16 entries (4x4 row-major)");
                }
                let mut m = [[0.0; 4]; 4];
                for (i, x) in v.into_iter().enumerate() {
                    m[i / 4][i % 4] = x;
                }
                Ok(Extrinsic(m))
            }
        }
    }
}

impl From<Extrinsic> for ExtrinsicRepr {
    fn from(e: Extrinsic) -> Self {
        ExtrinsicRepr::Nested(e.0)
    }
}

impl Default for Extrinsic {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Extrinsic {
    pub const IDENTITY: Extrinsic =
        Extrinsic([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);

    pub fn from_rotation_translation(r: [[f64; 3]; 3], t: [f64; 3]) -> Self {
        let mut m = Self::IDENTITY.0;
        for i in 0..3 {
            m[i][..3].copy_from_slice(&r[i]);
            m[i][3] = t[i];
        }
        Extrinsic(m)
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self::from_rotation_translation([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], t)
    }

    pub fn rotation_row(&self, i: usize) -> [f64; 3] {
        [self.0[i][0], self.0[i][1], self.0[i][2]]
    }

    pub fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    fn rotate_inverse(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
            m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
            m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.rotate(p);
        [r[0] + self.0[0][3], r[1] + self.0[1][3], r[2] + self.0[2][3]]
    }

    pub fn apply_inverse(&self, p: [f64; 3]) -> [f64; 3] {
        self.rotate_inverse([p[0] - self.0[0][3], p[1] - self.0[1][3], p[2] - self.0[2][3]])
    }

    fn is_rigid(&self) -> bool {
        const TOL: f64 = 1e-6;
        let m = &self.0;
        if m[3] != [0.0, 0.0, 0.0, 1.0] || m.iter().flatten().any(|v| !v.is_finite()) {
            return false;
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > TOL {
                    return false;
                }
            }
        }
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        det > 0.0
    }
}

/// Pinhole camera without lens distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
    #[serde(default)]
    pub extrinsic: Extrinsic,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, image: ImageSize, extrinsic: Extrinsic) -> Result<Self, SpaceError> {
        let cam = Self { fx, fy, cx, cy, image_w: image.width, image_h: image.height, extrinsic };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), SpaceError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(SpaceError::InvalidCamera("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.image_w)) {
            return Err(SpaceError::InvalidCamera("cx must lie in [0, image_w)"));
        }
        if !(self.cy >= 0.0 && self.cy < f64::from(self.image_h)) {
            return Err(SpaceError::InvalidCamera("cy must lie in [0, image_h)"));
        }
        if !self.extrinsic.is_rigid() {
            return Err(SpaceError::InvalidCamera("extrinsic is not a rigid transform"));
        }
        Ok(())
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::new(self.image_w, self.image_h)
    }

    pub fn to_camera_frame(&self, point: [f64; 3]) -> [f64; 3] {
        self.extrinsic.apply(point)
    }

    /// Projects an action-frame point to pixel coordinates.
    pub fn project(&self, point: [f64; 3]) -> Result<[f64; 2], SpaceError> {
        let [x, y, z] = self.to_camera_frame(point);
        if !(z > 0.0) {
            return Err(SpaceError::NonPositiveDepth(z));
        }
        Ok([self.fx * x / z + self.cx, self.fy * y / z + self.cy])
    }

    /// Inverse of [`project`](Self::project) for a known camera-frame depth.
    pub fn unproject(&self, px: [f64; 2], depth: f64) -> [f64; 3] {
        let cam = [(px[0] - self.cx) * depth / self.fx, (px[1] - self.cy) * depth / self.fy, depth];
        self.extrinsic.apply_inverse(cam)
    }

    /// Camera center and viewing-ray direction through `px`, both in the
    /// action frame.
    pub fn ray(&self, px: [f64; 2]) -> ([f64; 3], [f64; 3]) {
        let origin = self.extrinsic.apply_inverse([0.0, 0.0, 0.0]);
        let dir = self.extrinsic.rotate_inverse([(px[0] - self.cx) / self.fx, (px[1] - self.cy) / self.fy, 1.0]);
        (origin, dir)
    }

    /// Where the viewing ray through `px` meets the action-frame plane
    /// `z = height`, if it does so in front of the camera.
    pub fn intersect_plane_z(&self, px: [f64; 2], height: f64) -> Option<[f64; 3]> {
        let (o, d) = self.ray(px);
        if d[2].abs() < 1e-12 {
            return None;
        }
        let t = (height - o[2]) / d[2];
        if t <= 0.0 {
            return None;
        }
        Some([o[0] + t * d[0], o[1] + t * d[1], height])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrowRole {
    Direct,
    Pick,
    Place,
}

/// One arrow to draw: a candidate's start and end pixels, its forward
/// component (for depth styling) and its label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrowGeometry {
    pub start_px: [f64; 2],
    pub end_px: [f64; 2],
    pub depth: f64,
    pub label_id: u32,
    pub role: ArrowRole,
    /// Set when either endpoint had to be pulled back inside the image.
    pub clipped: bool,
}

impl ArrowGeometry {
    pub fn length(&self) -> f64 {
        libm::hypot(self.end_px[0] - self.start_px[0], self.end_px[1] - self.start_px[1])
    }
}

/// Start pixel implied by a 2D origin mode.
pub fn origin_pixel(origin: OriginMode, image: ImageSize) -> [f64; 2] {
    match origin {
        OriginMode::ImageBottomCenter => [f64::from(image.width) / 2.0, image.max_v()],
        OriginMode::ImageCenter => [f64::from(image.width) / 2.0, f64::from(image.height) / 2.0],
        OriginMode::EndEffectorPixel { u, v } => [u, v],
    }
}

/// Maps one action to the arrow(s) representing it.
///
/// Pickplace actions produce two arrows sharing `label_id`: origin → pick and
/// pick → place. All other kinds produce exactly one.
pub fn action_to_geometry(
    spec: &ActionSpaceSpec,
    camera: Option<&CameraModel>,
    image: ImageSize,
    action: &Action,
    label_id: u32,
) -> Result<Vec<ArrowGeometry>, SpaceError> {
    spec.check_dims(action)?;
    let a = action.as_slice();
    let arrow = |start, end, depth, role| {
        let (start_px, end_px, clipped) = clip_segment(start, end, image);
        ArrowGeometry { start_px, end_px, depth, label_id, role, clipped }
    };
    Ok(match spec.kind {
        SpaceKind::Nav2d | SpaceKind::Keypoint2d => {
            vec![arrow(origin_pixel(spec.origin, image), [a[0], a[1]], 0.0, ArrowRole::Direct)]
        }
        SpaceKind::Pickplace => {
            let pick = [a[0], a[1]];
            vec![
                arrow(origin_pixel(spec.origin, image), pick, 0.0, ArrowRole::Pick),
                arrow(pick, [a[2], a[3]], 0.0, ArrowRole::Place),
            ]
        }
        SpaceKind::Cart3d => {
            let cam = camera.ok_or(SpaceError::MissingCamera)?;
            let mut disp = [a[0], a[1], a[2]];
            if spec.height == HeightMode::FixedHeight {
                disp[2] = spec.bounds(2).0;
            }
            let ee = spec.end_effector;
            let start = cam.project(ee)?;
            let end = cam.project([ee[0] + disp[0], ee[1] + disp[1], ee[2] + disp[2]])?;
            let depth = cam.extrinsic.rotate(disp)[2];
            vec![arrow(start, end, depth, ArrowRole::Direct)]
        }
    })
}

/// Pulls the start inside the image and shortens the segment along its own
/// direction so the end lands on the border.
fn clip_segment(start: [f64; 2], end: [f64; 2], image: ImageSize) -> ([f64; 2], [f64; 2], bool) {
    let (mu, mv) = (image.max_u(), image.max_v());
    let s = [start[0].clamp(0.0, mu), start[1].clamp(0.0, mv)];
    let mut clipped = s != start;
    if image.contains(end) {
        return (s, end, clipped);
    }
    clipped = true;
    let d = [end[0] - s[0], end[1] - s[1]];
    let mut t_max: f64 = 1.0;
    for axis in 0..2 {
        let hi = if axis == 0 { mu } else { mv };
        if d[axis] > 0.0 {
            t_max = t_max.min((hi - s[axis]) / d[axis]);
        } else if d[axis] < 0.0 {
            t_max = t_max.min(-s[axis] / d[axis]);
        }
    }
    let t = t_max.max(0.0);
    let e = [(s[0] + t * d[0]).clamp(0.0, mu), (s[1] + t * d[1]).clamp(0.0, mv)];
    (s, e, clipped)
}

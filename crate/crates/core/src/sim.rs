//! Desk-scale closed-loop simulator: a planar navigation world and a spatial
//! reach world, both rendered schematically and driven by the optimizer.

use alloc::vec::Vec;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::annotate::AnnotationStyle;
use crate::optimize::{parallel_pivot, OptimizeError, PivotConfig, Problem};
use crate::oracle::{PromptOptions, SelectionOracle, TaskKind};
use crate::raster::{Raster, Rgb};
use crate::space::{Action, ActionSpaceSpec, CameraModel, Extrinsic, OriginMode, SpaceError};

/// Gap left between the agent and an obstacle surface it runs into.
pub const CONTACT_EPSILON: f64 = 1e-6;

pub const BACKGROUND: Rgb = Rgb([225, 225, 225]);
pub const TARGET_COLOR: Rgb = Rgb([40, 160, 60]);
pub const OBSTACLE_COLOR: Rgb = Rgb([90, 90, 90]);
pub const AGENT_COLOR: Rgb = Rgb([240, 140, 0]);

/// Drawn radius of the agent marker, in meters.
const AGENT_RADIUS: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("target is outside the camera view")]
    TargetOutOfView,
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(u32),
    #[error("invalid world: {0}")]
    InvalidWorld(&'static str),
    #[error("action has {got} components, world needs {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorldKind {
    /// Ground-plane navigation; `z` is always 0 and actions are pixels.
    #[default]
    Planar,
    /// Free-space end-effector reach; actions are 3D displacements.
    Spatial,
}

impl WorldKind {
    pub fn dims(self) -> usize {
        match self {
            WorldKind::Planar => 2,
            WorldKind::Spatial => 3,
        }
    }
}

/// Accepts `[x, y]` or `[x, y, z]`.
fn de_point<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 3], D::Error> {
    let v: Vec<f64> = Vec::deserialize(d)?;
    match *v.as_slice() {
        [x, y] => Ok([x, y, 0.0]),
        [x, y, z] => Ok([x, y, z]),
        _ => Err(D::Error::invalid_length(v.len(), &"2 or 3 coordinates")),
    }
}

/// Circle (planar) or sphere (spatial) that blocks motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    #[serde(deserialize_with = "de_point")]
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub image_w: u32,
    pub image_h: u32,
    /// World-to-camera model. When absent a top-down camera framing the
    /// whole world is used.
    #[serde(default)]
    pub camera: Option<CameraModel>,
}

impl Default for ViewSpec {
    fn default() -> Self {
        Self { image_w: 320, image_h: 240, camera: None }
    }
}

fn default_max_step() -> f64 {
    1.0
}

fn default_success_radius() -> f64 {
    0.5
}

fn default_budget() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    #[serde(default)]
    pub kind: WorldKind,
    #[serde(deserialize_with = "de_point")]
    pub agent_pos: [f64; 3],
    #[serde(deserialize_with = "de_point")]
    pub target_pos: [f64; 3],
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    /// Meters per executed action.
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    #[serde(default = "default_success_radius")]
    pub success_radius: f64,
    #[serde(default)]
    pub steps_taken: u32,
    #[serde(default = "default_budget")]
    pub budget: u32,
    #[serde(default)]
    pub view: ViewSpec,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

impl WorldState {
    pub fn planar(agent: [f64; 2], target: [f64; 2]) -> Self {
        Self {
            kind: WorldKind::Planar,
            agent_pos: [agent[0], agent[1], 0.0],
            target_pos: [target[0], target[1], 0.0],
            obstacles: Vec::new(),
            max_step: default_max_step(),
            success_radius: default_success_radius(),
            steps_taken: 0,
            budget: default_budget(),
            view: ViewSpec::default(),
        }
    }

    pub fn spatial(agent: [f64; 3], target: [f64; 3], camera: CameraModel) -> Self {
        Self {
            kind: WorldKind::Spatial,
            agent_pos: agent,
            target_pos: target,
            view: ViewSpec { image_w: camera.image_w, image_h: camera.image_h, camera: Some(camera) },
            ..Self::planar([0.0, 0.0], [0.0, 0.0])
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let finite = |p: [f64; 3]| p.iter().all(|v| v.is_finite());
        if !finite(self.agent_pos) || !finite(self.target_pos) {
            return Err(SimError::InvalidWorld("positions must be finite"));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(SimError::InvalidWorld("max_step must be positive"));
        }
        if !(self.success_radius >= 0.0) {
            return Err(SimError::InvalidWorld("success_radius must be non-negative"));
        }
        if self.steps_taken > self.budget {
            return Err(SimError::InvalidWorld("steps_taken exceeds budget"));
        }
        if self.view.image_w < 2 || self.view.image_h < 2 {
            return Err(SimError::InvalidWorld("view image must be at least 2x2"));
        }
        if self.kind == WorldKind::Planar
            && (self.agent_pos[2] != 0.0
                || self.target_pos[2] != 0.0
                || self.obstacles.iter().any(|o| o.center[2] != 0.0))
        {
            return Err(SimError::InvalidWorld("planar worlds live on z = 0"));
        }
        for o in &self.obstacles {
            if !(o.radius > 0.0) || !finite(o.center) {
                return Err(SimError::InvalidWorld("obstacle radius must be positive"));
            }
            if dist(self.agent_pos, o.center) <= o.radius {
                return Err(SimError::InvalidWorld("agent starts inside an obstacle"));
            }
        }
        if let Some(cam) = &self.view.camera {
            cam.validate()?;
        }
        Ok(())
    }

    pub fn distance_to_target(&self) -> f64 {
        dist(self.agent_pos, self.target_pos)
    }

    pub fn at_target(&self) -> bool {
        self.distance_to_target() <= self.success_radius
    }

    /// Top-down pinhole camera over the world's bounding square, with a
    /// margin of one step plus half a meter.
    pub fn top_down_camera(&self) -> CameraModel {
        let mut lo = [self.agent_pos[0].min(self.target_pos[0]), self.agent_pos[1].min(self.target_pos[1])];
        let mut hi = [self.agent_pos[0].max(self.target_pos[0]), self.agent_pos[1].max(self.target_pos[1])];
        let mut top = self.agent_pos[2].max(self.target_pos[2]);
        for o in &self.obstacles {
            for i in 0..2 {
                lo[i] = lo[i].min(o.center[i] - o.radius);
                hi[i] = hi[i].max(o.center[i] + o.radius);
            }
            top = top.max(o.center[2] + o.radius);
        }
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1])) / 2.0 + self.max_step + 0.5;
        let height = top + 10.0;
        let (w, h) = (self.view.image_w, self.view.image_h);
        let f = 0.5 * f64::from(w.min(h)) * height / half;
        // x right, world +y up the image, looking down -z.
        let r = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        let t = [-center[0], center[1], height];
        CameraModel {
            fx: f,
            fy: f,
            cx: f64::from(w) / 2.0,
            cy: f64::from(h) / 2.0,
            image_w: w,
            image_h: h,
            extrinsic: Extrinsic::from_rotation_translation(r, t),
        }
    }

    pub fn camera(&self) -> CameraModel {
        self.view.camera.unwrap_or_else(|| self.top_down_camera())
    }
}

/// Pixel ↔ world conversion for a rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMapping {
    pub camera: CameraModel,
    pub kind: WorldKind,
}

impl ViewMapping {
    pub fn world_to_pixel(&self, p: [f64; 3]) -> Result<[f64; 2], SpaceError> {
        self.camera.project(p)
    }

    /// Ground-plane point under a pixel (planar worlds).
    pub fn pixel_to_ground(&self, px: [f64; 2]) -> Option<[f64; 3]> {
        self.camera.intersect_plane_z(px, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub image: Raster,
    /// Pixel of the agent; arrows start here.
    pub origin_px: [f64; 2],
    pub mapping: ViewMapping,
}

/// Renders the world as colored discs, far objects first.
pub fn world_to_view(world: &WorldState, camera: &CameraModel) -> Result<View, SimError> {
    let size = camera.image_size();
    if !camera.project(world.target_pos).is_ok_and(|px| size.contains(px)) {
        return Err(SimError::TargetOutOfView);
    }
    let origin_px = camera.project(world.agent_pos)?;

    let mut discs: Vec<(f64, [f64; 2], f64, Rgb)> = Vec::new();
    let mut push = |center: [f64; 3], radius: f64, color: Rgb| {
        let z = camera.to_camera_frame(center)[2];
        if let Ok(px) = camera.project(center) {
            discs.push((z, px, radius * camera.fx / z, color));
        }
    };
    push(world.target_pos, world.success_radius, TARGET_COLOR);
    for o in &world.obstacles {
        push(o.center, o.radius, OBSTACLE_COLOR);
    }
    push(world.agent_pos, AGENT_RADIUS, AGENT_COLOR);
    // Stable sort keeps insertion order for equal depths.
    discs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut image = Raster::new(size.width, size.height, BACKGROUND);
    for (_, px, r, color) in &discs {
        image.fill_circle(*px, r.max(1.0), *color);
    }
    Ok(View { image, origin_px, mapping: ViewMapping { camera: *camera, kind: world.kind } })
}

/// Entry parameter of the ray `p + t·d` (unit `d`) into a sphere, if any.
fn ray_sphere_entry(p: [f64; 3], d: [f64; 3], c: [f64; 3], r: f64) -> Option<f64> {
    let m = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
    let b = m[0] * d[0] + m[1] * d[1] + m[2] * d[2];
    let cc = m[0] * m[0] + m[1] * m[1] + m[2] * m[2] - r * r;
    if cc > 0.0 && b > 0.0 {
        return None;
    }
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    Some((-b - libm::sqrt(disc)).max(0.0))
}

/// Moves the agent along `action` (a world-frame displacement) by at most
/// `max_step`, stopping just short of the first obstacle in the way.
pub fn step(world: &WorldState, action: &Action) -> Result<WorldState, SimError> {
    let dims = world.kind.dims();
    if action.len() != dims {
        return Err(SimError::DimensionMismatch { expected: dims, got: action.len() });
    }
    if world.steps_taken >= world.budget {
        return Err(SimError::BudgetExhausted(world.budget));
    }
    let a = action.as_slice();
    let v = [a[0], a[1], if dims == 3 { a[2] } else { 0.0 }];
    let norm = libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    let mut next = world.clone();
    next.steps_taken += 1;
    if !(norm > 0.0) {
        return Ok(next);
    }
    let d = [v[0] / norm, v[1] / norm, v[2] / norm];
    let mut travel = norm.min(world.max_step);
    for o in &world.obstacles {
        if let Some(t) = ray_sphere_entry(world.agent_pos, d, o.center, o.radius) {
            if t < travel {
                travel = (t - CONTACT_EPSILON).max(0.0);
            }
        }
    }
    let p = world.agent_pos;
    next.agent_pos = [p[0] + travel * d[0], p[1] + travel * d[1], p[2] + travel * d[2]];
    Ok(next)
}

/// Whether the segment `a → b` passes within `r` of `c`.
fn segment_enters(a: [f64; 3], b: [f64; 3], c: [f64; 3], r: f64) -> bool {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        (((c[0] - a[0]) * ab[0] + (c[1] - a[1]) * ab[1] + (c[2] - a[2]) * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist([a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]], c) <= r
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Ended inside the success radius.
    pub success: bool,
    pub steps: u32,
    /// Passed within the success radius at some point.
    pub reached: bool,
    pub trajectory: Vec<[f64; 3]>,
    /// World-frame displacement commanded at each step.
    pub actions: Vec<Action>,
    /// Annotated image of each step's final iteration, when kept.
    pub frames: Vec<Raster>,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    pub style: AnnotationStyle,
    pub prompt: Option<PromptOptions>,
    pub instruction: Option<alloc::string::String>,
}

pub fn rollout<O: SelectionOracle + ?Sized, R: Rng + ?Sized>(
    world: &WorldState,
    oracle: &mut O,
    config: &PivotConfig,
    rng: &mut R,
) -> Result<EpisodeResult, SimError> {
    rollout_with(world, oracle, config, &RolloutOptions::default(), rng)
}

/// Render → optimize → step until the agent stops inside the success radius
/// or the budget runs out.
///
/// Planar worlds optimize over view pixels with arrows from the agent; the
/// chosen pixel is mapped to the ground and the agent heads for it. Spatial
/// worlds optimize a displacement in a cube of half-width `max_step` around
/// the agent. Oracles that accept a reference are given the target pixel or
/// the step-capped displacement to the target.
pub fn rollout_with<O: SelectionOracle + ?Sized, R: Rng + ?Sized>(
    world: &WorldState,
    oracle: &mut O,
    config: &PivotConfig,
    options: &RolloutOptions,
    rng: &mut R,
) -> Result<EpisodeResult, SimError> {
    world.validate()?;
    let camera = world.camera();
    let mut state = world.clone();
    let mut result = EpisodeResult {
        success: state.at_target(),
        steps: 0,
        reached: state.at_target(),
        trajectory: alloc::vec![state.agent_pos],
        actions: Vec::new(),
        frames: Vec::new(),
    };
    let task = match world.kind {
        WorldKind::Planar => TaskKind::Navigation,
        WorldKind::Spatial => TaskKind::Manipulation,
    };
    let prompt = options.prompt.clone().unwrap_or_else(|| PromptOptions::for_task(task));
    let instruction = options.instruction.as_deref().unwrap_or(match world.kind {
        WorldKind::Planar => "go to the green circle",
        WorldKind::Spatial => "move the gripper to the green ball",
    });

    while !result.success && state.steps_taken < state.budget {
        let view = world_to_view(&state, &camera)?;
        let size = view.image.size();
        let (spec, reference) = match state.kind {
            WorldKind::Planar => {
                let spec = ActionSpaceSpec::nav2d(size)
                    .with_origin(OriginMode::EndEffectorPixel { u: view.origin_px[0], v: view.origin_px[1] });
                let t = view.mapping.world_to_pixel(state.target_pos)?;
                (spec, Action::new(alloc::vec![t[0], t[1]]))
            }
            WorldKind::Spatial => {
                let s = state.max_step;
                let spec = ActionSpaceSpec::cart3d([-s, -s, -s], [s, s, s], state.agent_pos);
                let d = state.distance_to_target();
                let scale = if d > s { s / d } else { 1.0 };
                let p = state.agent_pos;
                let t = state.target_pos;
                let disp = (0..3).map(|i| (t[i] - p[i]) * scale).collect();
                (spec, Action::new(disp))
            }
        };
        oracle.set_reference(&reference);
        let problem = Problem {
            image: &view.image,
            instruction,
            spec: &spec,
            camera: (state.kind == WorldKind::Spatial).then_some(&camera),
            style: &options.style,
            prompt: &prompt,
        };
        let outcome = parallel_pivot(&problem, oracle, config, rng)?;
        if config.keep_images {
            let frame = outcome.successes().next().and_then(|o| o.trace.records.last()).and_then(|r| r.image.clone());
            result.frames.extend(frame);
        }
        let displacement = match state.kind {
            WorldKind::Planar => {
                let a = outcome.best.as_slice();
                let ground = view.mapping.pixel_to_ground([a[0], a[1]]).ok_or(SimError::TargetOutOfView)?;
                Action::new(alloc::vec![ground[0] - state.agent_pos[0], ground[1] - state.agent_pos[1]])
            }
            WorldKind::Spatial => outcome.best.clone(),
        };
        let prev = state.agent_pos;
        state = step(&state, &displacement)?;
        result.reached |= segment_enters(prev, state.agent_pos, state.target_pos, state.success_radius);
        result.trajectory.push(state.agent_pos);
        result.actions.push(displacement);
        result.steps = state.steps_taken;
        result.success = state.at_target();
    }
    Ok(result)
}

/// `ceil(d0 / max_step)`: the fewest steps that can cover the initial
/// distance to the target.
pub fn geometric_step_bound(world: &WorldState) -> u32 {
    libm::ceil(world.distance_to_target() / world.max_step) as u32
}

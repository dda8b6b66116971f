//! Procedural arrow-robustness datasets.
//!
//! Two flavours: a single arrow on a blank canvas whose absolute diagonal
//! direction must be named, and a schematic tabletop with several objects,
//! each targeted by one numbered arrow, where the arrow pointing at a named
//! object must be picked. Ground truth is known by construction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{Raster, Rgb};
use crate::seed::rng_for;
use crate::space::ImageSize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrowColor {
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
    Purple,
}

impl ArrowColor {
    pub const ALL: [ArrowColor; 6] = [
        ArrowColor::Red,
        ArrowColor::Orange,
        ArrowColor::Yellow,
        ArrowColor::Green,
        ArrowColor::Blue,
        ArrowColor::Purple,
    ];

    pub fn rgb(self) -> Rgb {
        match self {
            ArrowColor::Red => Rgb([230, 25, 25]),
            ArrowColor::Orange => Rgb([255, 140, 0]),
            ArrowColor::Yellow => Rgb([240, 210, 0]),
            ArrowColor::Green => Rgb([20, 170, 40]),
            ArrowColor::Blue => Rgb([25, 60, 230]),
            ArrowColor::Purple => Rgb([140, 40, 190]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArrowColor::Red => "red",
            ArrowColor::Orange => "orange",
            ArrowColor::Yellow => "yellow",
            ArrowColor::Green => "green",
            ArrowColor::Blue => "blue",
            ArrowColor::Purple => "purple",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// Diagonal arrow direction in image terms (up = toward row 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Diagonal {
    #[serde(rename = "up+right")]
    UpRight,
    #[serde(rename = "down+right")]
    DownRight,
    #[serde(rename = "up+left")]
    UpLeft,
    #[serde(rename = "down+left")]
    DownLeft,
}

impl Diagonal {
    pub const ALL: [Diagonal; 4] = [Diagonal::UpRight, Diagonal::DownRight, Diagonal::UpLeft, Diagonal::DownLeft];

    pub fn name(self) -> &'static str {
        match self {
            Diagonal::UpRight => "up+right",
            Diagonal::DownRight => "down+right",
            Diagonal::UpLeft => "up+left",
            Diagonal::DownLeft => "down+left",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name().eq_ignore_ascii_case(s.trim()))
    }

    /// Unit vector in pixel coordinates.
    pub fn unit(self) -> [f64; 2] {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        match self {
            Diagonal::UpRight => [h, -h],
            Diagonal::DownRight => [h, h],
            Diagonal::UpLeft => [-h, -h],
            Diagonal::DownLeft => [-h, h],
        }
    }

    /// Classifies a pixel-space direction by the signs of its components.
    pub fn classify(d: [f64; 2]) -> Option<Self> {
        match (d[0] > 0.0, d[0] < 0.0, d[1] < 0.0, d[1] > 0.0) {
            (true, _, true, _) => Some(Diagonal::UpRight),
            (true, _, _, true) => Some(Diagonal::DownRight),
            (_, true, true, _) => Some(Diagonal::UpLeft),
            (_, true, _, true) => Some(Diagonal::DownLeft),
            _ => None,
        }
    }
}

impl fmt::Display for Diagonal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetMode {
    #[default]
    BlankBackground,
    ObjectReferential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    VeryHard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Disc,
    Square,
    Triangle,
    Bar,
}

struct ObjectKind {
    name: &'static str,
    difficulty: Difficulty,
    shape: Shape,
    color: Rgb,
}

const OBJECTS: [ObjectKind; 8] = [
    ObjectKind { name: "plate", difficulty: Difficulty::Easy, shape: Shape::Disc, color: Rgb([235, 235, 225]) },
    ObjectKind { name: "box", difficulty: Difficulty::Easy, shape: Shape::Square, color: Rgb([170, 120, 70]) },
    ObjectKind { name: "cup", difficulty: Difficulty::Medium, shape: Shape::Disc, color: Rgb([60, 130, 150]) },
    ObjectKind { name: "bag", difficulty: Difficulty::Medium, shape: Shape::Square, color: Rgb([90, 90, 110]) },
    ObjectKind { name: "hanger", difficulty: Difficulty::Hard, shape: Shape::Triangle, color: Rgb([200, 200, 205]) },
    ObjectKind { name: "toy", difficulty: Difficulty::Hard, shape: Shape::Triangle, color: Rgb([220, 110, 160]) },
    ObjectKind { name: "brush", difficulty: Difficulty::VeryHard, shape: Shape::Bar, color: Rgb([110, 70, 40]) },
    ObjectKind { name: "whisk", difficulty: Difficulty::VeryHard, shape: Shape::Bar, color: Rgb([160, 160, 150]) },
];

/// Parameter axes; the dataset is their full Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowGrid {
    pub colors: Vec<ArrowColor>,
    pub thicknesses: Vec<u32>,
    pub head_ratios: Vec<f64>,
    pub directions: Vec<Diagonal>,
}

impl Default for ArrowGrid {
    /// Six colors × thickness {2, 4, 6} × arrowhead {0.1, 0.3, 0.5} × four diagonals.
    fn default() -> Self {
        Self {
            colors: ArrowColor::ALL.to_vec(),
            thicknesses: vec![2, 4, 6],
            head_ratios: vec![0.1, 0.3, 0.5],
            directions: Diagonal::ALL.to_vec(),
        }
    }
}

impl ArrowGrid {
    pub fn len(&self) -> usize {
        self.colors.len() * self.thicknesses.len() * self.head_ratios.len() * self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrowDatasetParams {
    pub grid: ArrowGrid,
    pub mode: DatasetMode,
    pub seed: u64,
    pub image: ImageSize,
}

impl Default for ArrowDatasetParams {
    fn default() -> Self {
        Self { grid: ArrowGrid::default(), mode: DatasetMode::default(), seed: 0, image: ImageSize::new(256, 256) }
    }
}

/// A drawn arrow, in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawnArrow {
    pub label: u32,
    pub tail: [f64; 2],
    pub tip: [f64; 2],
}

/// A placed scene object (object-referential mode).
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub name: &'static str,
    pub difficulty: Difficulty,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrowSample {
    pub index: usize,
    pub color: ArrowColor,
    pub thickness: u32,
    pub head_ratio: f64,
    pub direction: Diagonal,
    pub image: Raster,
    pub query: String,
    pub answer: String,
    pub arrows: Vec<DrawnArrow>,
    pub objects: Vec<SceneObject>,
    /// Index into `objects` of the queried object (object-referential mode).
    pub target: Option<usize>,
}

impl ArrowSample {
    pub fn difficulty(&self) -> Option<Difficulty> {
        self.target.map(|t| self.objects[t].difficulty)
    }
}

pub const BLANK_QUERY: &str =
    "In which direction does the arrow point? Answer with exactly one of: up+right, down+right, up+left, down+left.";

/// Generates the full grid, in color → thickness → arrowhead → direction
/// order. Deterministic in `params.seed`.
pub fn gen_arrow_dataset(params: &ArrowDatasetParams) -> Vec<ArrowSample> {
    let g = &params.grid;
    let mut out = Vec::with_capacity(g.len());
    for &color in &g.colors {
        for &thickness in &g.thicknesses {
            for &head_ratio in &g.head_ratios {
                for &direction in &g.directions {
                    let index = out.len();
                    let spec = SampleSpec { index, color, thickness, head_ratio, direction };
                    out.push(match params.mode {
                        DatasetMode::BlankBackground => blank_sample(params, spec),
                        DatasetMode::ObjectReferential => object_sample(params, spec),
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy)]
struct SampleSpec {
    index: usize,
    color: ArrowColor,
    thickness: u32,
    head_ratio: f64,
    direction: Diagonal,
}

fn blank_sample(params: &ArrowDatasetParams, s: SampleSpec) -> ArrowSample {
    let mut rng = rng_for(params.seed, &[s.index as u64]);
    let (w, h) = (f64::from(params.image.width), f64::from(params.image.height));
    let side = w.min(h);
    let len = side * rng.random_range(0.35..0.55);
    let c = [w / 2.0 + side * rng.random_range(-0.1..0.1), h / 2.0 + side * rng.random_range(-0.1..0.1)];
    let u = s.direction.unit();
    let tail = [c[0] - u[0] * len / 2.0, c[1] - u[1] * len / 2.0];
    let tip = [c[0] + u[0] * len / 2.0, c[1] + u[1] * len / 2.0];
    let mut image = Raster::new(params.image.width, params.image.height, Rgb::WHITE);
    image.draw_arrow(tail, tip, f64::from(s.thickness), s.head_ratio, s.color.rgb());
    ArrowSample {
        index: s.index,
        color: s.color,
        thickness: s.thickness,
        head_ratio: s.head_ratio,
        direction: s.direction,
        image,
        query: String::from(BLANK_QUERY),
        answer: String::from(s.direction.name()),
        arrows: vec![DrawnArrow { label: 1, tail, tip }],
        objects: Vec::new(),
        target: None,
    }
}

const OBJECTS_PER_SCENE: usize = 4;
const TABLE: Rgb = Rgb([196, 184, 164]);

fn object_sample(params: &ArrowDatasetParams, s: SampleSpec) -> ArrowSample {
    let mut rng = rng_for(params.seed, &[s.index as u64]);
    let (w, h) = (f64::from(params.image.width), f64::from(params.image.height));
    let side = w.min(h);
    let radius = side * 0.06;
    let arrow_len = side * 0.22;
    let gap = 3.0 + f64::from(s.thickness);
    let margin = side * 0.04;

    let mut kinds: Vec<usize> = (0..OBJECTS.len()).collect();
    kinds.shuffle(&mut rng);
    kinds.truncate(OBJECTS_PER_SCENE);
    let target = rng.random_range(0..OBJECTS_PER_SCENE);

    let inside = |p: [f64; 2]| p[0] >= margin && p[1] >= margin && p[0] <= w - margin && p[1] <= h - margin;
    let mut centers: Vec<[f64; 2]> = Vec::new();
    let mut arrows: Vec<([f64; 2], [f64; 2])> = Vec::new();
    let mut attempts = 0u32;
    while centers.len() < OBJECTS_PER_SCENE {
        attempts += 1;
        if attempts > 20_000 {
            // Start over; the canvas got boxed in.
            centers.clear();
            arrows.clear();
            attempts = 0;
        }
        let i = centers.len();
        let c = [
            rng.random_range(radius + margin..w - radius - margin),
            rng.random_range(radius + margin..h - radius - margin),
        ];
        let dir = if i == target { s.direction } else { Diagonal::ALL[rng.random_range(0..4)] };
        let u = dir.unit();
        let tip = [c[0] - u[0] * (radius + gap), c[1] - u[1] * (radius + gap)];
        let tail = [tip[0] - u[0] * arrow_len, tip[1] - u[1] * arrow_len];
        if !inside(tail) {
            continue;
        }
        let clear_of_objects = centers.iter().all(|o| dist(*o, c) > 2.0 * radius + 2.0 * gap + arrow_len * 0.5)
            && centers.iter().all(|o| seg_point_dist(tail, tip, *o) > radius + gap)
            && arrows.iter().all(|(t0, t1)| seg_point_dist(*t0, *t1, c) > radius + gap);
        let clear_of_arrows = arrows.iter().all(|(t0, t1)| seg_seg_dist(*t0, *t1, tail, tip) > 2.5 * radius);
        if clear_of_objects && clear_of_arrows {
            centers.push(c);
            arrows.push((tail, tip));
        }
    }

    let mut labels: Vec<u32> = (1..=OBJECTS_PER_SCENE as u32).collect();
    labels.shuffle(&mut rng);

    let mut image = Raster::new(params.image.width, params.image.height, TABLE);
    let objects: Vec<SceneObject> = kinds
        .iter()
        .zip(&centers)
        .map(|(&k, &c)| {
            let kind = &OBJECTS[k];
            draw_object(&mut image, kind, c, radius);
            SceneObject { name: kind.name, difficulty: kind.difficulty, center: c, radius }
        })
        .collect();

    let color = s.color.rgb();
    let label_r = (side * 0.045).max(7.0);
    let mut drawn = Vec::with_capacity(arrows.len());
    for (&(tail, tip), &label) in arrows.iter().zip(&labels) {
        image.draw_arrow(tail, tip, f64::from(s.thickness), s.head_ratio, color);
        drawn.push(DrawnArrow { label, tail, tip });
    }
    for a in &drawn {
        image.fill_circle(a.tail, label_r, Rgb::WHITE);
        image.stroke_circle(a.tail, label_r, 2.0, color);
        image.draw_number(a.tail, &format!("{}", a.label), if label_r >= 10.0 { 14 } else { 7 }, Rgb::BLACK);
    }

    let name = objects[target].name;
    ArrowSample {
        index: s.index,
        color: s.color,
        thickness: s.thickness,
        head_ratio: s.head_ratio,
        direction: s.direction,
        image,
        query: format!("Which numbered arrow points at the {name}? Answer with the arrow number only."),
        answer: format!("{}", labels[target]),
        arrows: drawn,
        objects,
        target: Some(target),
    }
}

fn draw_object(image: &mut Raster, kind: &ObjectKind, c: [f64; 2], r: f64) {
    let outline = Rgb([60, 55, 50]);
    match kind.shape {
        Shape::Disc => {
            image.fill_circle(c, r, outline);
            image.fill_circle(c, r - 2.0, kind.color);
        }
        Shape::Square => {
            let h = r * 0.85;
            image.fill_rect([c[0] - h, c[1] - h], [c[0] + h, c[1] + h], outline);
            image.fill_rect([c[0] - h + 2.0, c[1] - h + 2.0], [c[0] + h - 2.0, c[1] + h - 2.0], kind.color);
        }
        Shape::Triangle => {
            image.fill_triangle(
                [[c[0], c[1] - r], [c[0] - r * 0.9, c[1] + r * 0.7], [c[0] + r * 0.9, c[1] + r * 0.7]],
                kind.color,
            );
            image.draw_line([c[0] - r * 0.9, c[1] + r * 0.7], [c[0] + r * 0.9, c[1] + r * 0.7], 2.0, outline);
        }
        Shape::Bar => {
            image.draw_line([c[0] - r, c[1] + r * 0.5], [c[0] + r, c[1] - r * 0.5], r * 0.45, kind.color);
            image.fill_circle([c[0] + r, c[1] - r * 0.5], r * 0.35, outline);
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

fn seg_point_dist(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

fn seg_seg_dist(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> f64 {
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0]);
    let intersects = cross(a0, a1, b0) * cross(a0, a1, b1) < 0.0 && cross(b0, b1, a0) * cross(b0, b1, a1) < 0.0;
    if intersects {
        return 0.0;
    }
    seg_point_dist(a0, a1, b0)
        .min(seg_point_dist(a0, a1, b1))
        .min(seg_point_dist(b0, b1, a0))
        .min(seg_point_dist(b0, b1, a1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid(dirs: Vec<Diagonal>) -> ArrowGrid {
        ArrowGrid {
            colors: vec![ArrowColor::Red],
            thicknesses: vec![2, 4, 6],
            head_ratios: vec![0.1],
            directions: dirs,
        }
    }

    #[test]
    fn three_thicknesses_one_direction() {
        let p = ArrowDatasetParams { grid: small_grid(vec![Diagonal::UpRight]), ..Default::default() };
        let d = gen_arrow_dataset(&p);
        assert_eq!(d.len(), 3);
        assert!(d.iter().all(|s| s.answer == "up+right"));
        assert_eq!(d.iter().map(|s| s.thickness).collect::<Vec<_>>(), vec![2, 4, 6]);
    }

    #[test]
    fn empty_grid_gives_empty_dataset() {
        let p = ArrowDatasetParams { grid: small_grid(vec![]), ..Default::default() };
        assert!(gen_arrow_dataset(&p).is_empty());
    }

    #[test]
    fn default_grid_size() {
        assert_eq!(ArrowGrid::default().len(), 6 * 3 * 3 * 4);
    }

    #[test]
    fn same_seed_same_pixels() {
        for mode in [DatasetMode::BlankBackground, DatasetMode::ObjectReferential] {
            let p =
                ArrowDatasetParams { grid: small_grid(Diagonal::ALL.to_vec()), mode, seed: 11, ..Default::default() };
            assert_eq!(gen_arrow_dataset(&p), gen_arrow_dataset(&p));
        }
    }

    #[test]
    fn blank_arrow_direction_matches_label() {
        let p = ArrowDatasetParams { grid: small_grid(Diagonal::ALL.to_vec()), seed: 3, ..Default::default() };
        for s in gen_arrow_dataset(&p) {
            let a = s.arrows[0];
            let dir = Diagonal::classify([a.tip[0] - a.tail[0], a.tip[1] - a.tail[1]]).unwrap();
            assert_eq!(dir.name(), s.answer);
            // The arrowhead just behind the tip carries the arrow color.
            let u = dir.unit();
            let tip = s.image.get((a.tip[0] - 3.0 * u[0]).round() as u32, (a.tip[1] - 3.0 * u[1]).round() as u32);
            assert_eq!(tip, Some(s.color.rgb()));
        }
    }

    #[test]
    fn object_referential_answer_points_at_target() {
        let p = ArrowDatasetParams {
            grid: small_grid(Diagonal::ALL.to_vec()),
            mode: DatasetMode::ObjectReferential,
            seed: 5,
            ..Default::default()
        };
        for s in gen_arrow_dataset(&p) {
            let target = &s.objects[s.target.unwrap()];
            let answer: u32 = s.answer.parse().unwrap();
            let hit = s.arrows.iter().find(|a| a.label == answer).unwrap();
            let d = [hit.tip[0] - hit.tail[0], hit.tip[1] - hit.tail[1]];
            assert_eq!(Diagonal::classify(d), Some(s.direction));
            // The answer arrow's tip is nearer the target than any other arrow's tip.
            let tip_dist = |a: &DrawnArrow| dist(a.tip, target.center);
            assert!(s.arrows.iter().filter(|a| a.label != answer).all(|a| tip_dist(a) > tip_dist(hit)));
            assert!(s.query.contains(target.name));
        }
    }
}

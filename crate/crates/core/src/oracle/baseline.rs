//! Text-only baseline: instead of choosing among drawn candidates, the oracle
//! names one cell of a 3×3 grid over the unannotated image, and the cell
//! center becomes the prediction.

use alloc::format;
use alloc::string::String;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::OracleError;
use crate::raster::Raster;
use crate::seed::PivotRng;
use crate::space::ImageSize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    /// 0 = top, 1 = middle, 2 = bottom.
    pub row: u8,
    /// 0 = left, 1 = middle, 2 = right.
    pub col: u8,
}

const ROWS: [&str; 3] = ["top", "middle", "bottom"];
const COLS: [&str; 3] = ["left", "middle", "right"];

impl Region {
    pub fn name(self) -> String {
        if self.row == 1 && self.col == 1 {
            return String::from("center");
        }
        format!("{} {}", ROWS[usize::from(self.row)], COLS[usize::from(self.col)])
    }

    pub fn all() -> impl Iterator<Item = Region> {
        (0..3u8).flat_map(|row| (0..3u8).map(move |col| Region { row, col }))
    }

    pub fn center(self, image: ImageSize) -> [f64; 2] {
        let (w, h) = (f64::from(image.width), f64::from(image.height));
        [w * (2.0 * f64::from(self.col) + 1.0) / 6.0, h * (2.0 * f64::from(self.row) + 1.0) / 6.0]
    }

    /// Cell containing pixel `p`; points outside the image snap to the
    /// nearest cell.
    pub fn containing(p: [f64; 2], image: ImageSize) -> Region {
        let cell = |x: f64, extent: u32| -> u8 {
            let e = f64::from(extent.max(1));
            libm::floor(3.0 * x / e).clamp(0.0, 2.0) as u8
        };
        Region { row: cell(p[1], image.height), col: cell(p[0], image.width) }
    }
}

/// Last region name mentioned in `raw`. Accepts "top left", "top-left",
/// "center", "middle middle" and similar spellings.
pub fn parse_region(raw: &str) -> Option<Region> {
    let text: String =
        raw.chars().map(|c| if c.is_ascii_alphabetic() { c.to_ascii_lowercase() } else { ' ' }).collect();
    let words: alloc::vec::Vec<&str> = text.split_whitespace().collect();
    let row_of =
        |w: &str| ROWS.iter().position(|r| *r == w).or((w == "upper").then_some(0)).or((w == "lower").then_some(2));
    let col_of = |w: &str| COLS.iter().position(|c| *c == w).or((w == "center" || w == "centre").then_some(1));
    let mut found = None;
    let mut i = 0;
    while i < words.len() {
        if let (Some(r), Some(c)) = (row_of(words[i]), words.get(i + 1).and_then(|w| col_of(w))) {
            found = Some(Region { row: r as u8, col: c as u8 });
            i += 2;
            continue;
        }
        if words[i] == "center" || words[i] == "centre" {
            found = Some(Region { row: 1, col: 1 });
        }
        i += 1;
    }
    found
}

pub fn region_prompt(instruction: &str) -> String {
    format!(
        "I am a wheeled robot that cannot go over objects. This is the image I'm seeing right now. \
Imagine the image is split into 3 rows and 3 columns of equal-sized regions. \
Which region should I move toward for the task of: {instruction}? \
Answer with the name of exactly one region: top left, top middle, top right, middle left, center, \
middle right, bottom left, bottom middle or bottom right."
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionReply {
    pub region: Region,
    pub raw_text: String,
}

pub trait RegionOracle {
    fn pick_region(&mut self, image: &Raster, instruction: &str) -> Result<RegionReply, OracleError>;

    /// Known target pixel, for oracles that score against one.
    fn set_reference(&mut self, _truth_px: [f64; 2]) {}
}

/// Names the cell containing the (optionally noise-perturbed) target pixel.
#[derive(Debug, Clone)]
pub struct SyntheticRegionPicker {
    truth_px: Option<[f64; 2]>,
    noise_sigma: f64,
    rng: PivotRng,
}

impl SyntheticRegionPicker {
    pub fn new(truth_px: Option<[f64; 2]>, noise_sigma: f64, seed: u64) -> Self {
        Self { truth_px, noise_sigma, rng: PivotRng::seed_from_u64(seed) }
    }
}

impl RegionOracle for SyntheticRegionPicker {
    fn pick_region(&mut self, image: &Raster, _instruction: &str) -> Result<RegionReply, OracleError> {
        let truth = self.truth_px.ok_or(OracleError::MissingReference)?;
        let size = image.size();
        let extent = f64::from(size.width.max(size.height));
        let zx: f64 = StandardNormal.sample(&mut self.rng);
        let zy: f64 = StandardNormal.sample(&mut self.rng);
        let p = [truth[0] + self.noise_sigma * extent * zx, truth[1] + self.noise_sigma * extent * zy];
        let region = Region::containing(p, size);
        Ok(RegionReply { region, raw_text: region.name() })
    }

    fn set_reference(&mut self, truth_px: [f64; 2]) {
        self.truth_px = Some(truth_px);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Rgb;

    #[test]
    fn names_round_trip() {
        for r in Region::all() {
            assert_eq!(parse_region(&r.name()), Some(r), "{}", r.name());
        }
    }

    #[test]
    fn parse_takes_last_mention() {
        assert_eq!(parse_region("Not the top left; go bottom-middle."), Some(Region { row: 2, col: 1 }));
        assert_eq!(parse_region("Upper right region"), Some(Region { row: 0, col: 2 }));
        assert_eq!(parse_region("no idea"), None);
    }

    #[test]
    fn centers_and_containment() {
        let size = ImageSize::new(600, 300);
        assert_eq!(Region { row: 1, col: 1 }.center(size), [300.0, 150.0]);
        assert_eq!(Region { row: 0, col: 0 }.center(size), [100.0, 50.0]);
        for r in Region::all() {
            assert_eq!(Region::containing(r.center(size), size), r);
        }
        assert_eq!(Region::containing([-5.0, 1e9], size), Region { row: 2, col: 0 });
    }

    #[test]
    fn noiseless_picker_names_truth_cell() {
        let img = Raster::new(90, 90, Rgb::WHITE);
        let mut p = SyntheticRegionPicker::new(Some([80.0, 10.0]), 0.0, 1);
        assert_eq!(p.pick_region(&img, "x").unwrap().region, Region { row: 0, col: 2 });
    }
}

//! In-memory 8-bit RGB raster with the handful of drawing primitives the
//! annotator and the simulator views need.
//!
//! All primitives decide pixel coverage by testing the pixel center against
//! the exact shape, so output is identical on every platform.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
    pub const RED: Rgb = Rgb([255, 0, 0]);
    pub const BLUE: Rgb = Rgb([0, 0, 255]);

    /// Linear blend, `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn lerp(self, other: Rgb, t: f64) -> Rgb {
        let mut out = [0u8; 3];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            let v = f64::from(*a) + (f64::from(*b) - f64::from(*a)) * t;
            *o = libm::round(v).clamp(0.0, 255.0) as u8;
        }
        Rgb(out)
    }

    /// Rec. 601 luma in `[0, 255]`.
    pub fn luma(self) -> f64 {
        let [r, g, b] = self.0;
        0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut data = vec![0u8; width as usize * height as usize * 3];
        for px in data.chunks_exact_mut(3) {
            px.copy_from_slice(&fill.0);
        }
        Self { width, height, data }
    }

    /// Wraps tightly packed RGB bytes. Returns `None` if the length is wrong.
    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Option<Self> {
        (data.len() == width as usize * height as usize * 3).then_some(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> crate::space::ImageSize {
        crate::space::ImageSize::new(self.width, self.height)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: u32, y: u32) -> Option<Rgb> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        Some(Rgb([self.data[i], self.data[i + 1], self.data[i + 2]]))
    }

    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= i64::from(self.width) || y >= i64::from(self.height) {
            return;
        }
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&c.0);
    }

    /// Integer pixel box covering `[min, max]`, clipped to the raster.
    fn span(&self, min: [f64; 2], max: [f64; 2]) -> Option<(i64, i64, i64, i64)> {
        let x0 = (libm::floor(min[0]) as i64).max(0);
        let y0 = (libm::floor(min[1]) as i64).max(0);
        let x1 = (libm::ceil(max[0]) as i64).min(i64::from(self.width) - 1);
        let y1 = (libm::ceil(max[1]) as i64).min(i64::from(self.height) - 1);
        (x0 <= x1 && y0 <= y1).then_some((x0, y0, x1, y1))
    }

    pub fn fill_rect(&mut self, min: [f64; 2], max: [f64; 2], c: Rgb) {
        if let Some((x0, y0, x1, y1)) = self.span(min, max) {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (fx, fy) = (x as f64, y as f64);
                    if fx >= min[0] && fx <= max[0] && fy >= min[1] && fy <= max[1] {
                        self.put(x, y, c);
                    }
                }
            }
        }
    }

    pub fn fill_circle(&mut self, center: [f64; 2], radius: f64, c: Rgb) {
        self.ring(center, radius, -1.0, c);
    }

    /// Circle outline covering radii `(radius - width, radius]`.
    pub fn stroke_circle(&mut self, center: [f64; 2], radius: f64, width: f64, c: Rgb) {
        self.ring(center, radius, radius - width, c);
    }

    fn ring(&mut self, center: [f64; 2], outer: f64, inner: f64, c: Rgb) {
        if outer <= 0.0 {
            return;
        }
        let Some((x0, y0, x1, y1)) =
            self.span([center[0] - outer, center[1] - outer], [center[0] + outer, center[1] + outer])
        else {
            return;
        };
        let (o2, i2) = (outer * outer, if inner > 0.0 { inner * inner } else { -1.0 });
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - center[0];
                let dy = y as f64 - center[1];
                let d2 = dx * dx + dy * dy;
                if d2 <= o2 && d2 > i2 {
                    self.put(x, y, c);
                }
            }
        }
    }

    /// Segment of the given thickness with round caps.
    pub fn draw_line(&mut self, a: [f64; 2], b: [f64; 2], thickness: f64, c: Rgb) {
        let half = (thickness / 2.0).max(0.5);
        let Some((x0, y0, x1, y1)) =
            self.span([a[0].min(b[0]) - half, a[1].min(b[1]) - half], [a[0].max(b[0]) + half, a[1].max(b[1]) + half])
        else {
            return;
        };
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let len = libm::sqrt(len2);
        for y in y0..=y1 {
            // Restrict the row to the infinite band of half-width `half`
            // around the line; the capsule lies inside it.
            let (mut xs, mut xe) = (x0, x1);
            if len > 0.0 && d[1].abs() > 1e-9 * len {
                let (ux, uy) = (d[0] / len, d[1] / len);
                let mid = a[0] + (y as f64 - a[1]) * ux / uy;
                let reach = half / uy.abs();
                xs = xs.max(libm::floor(mid - reach) as i64 - 1);
                xe = xe.min(libm::ceil(mid + reach) as i64 + 1);
            }
            for x in xs..=xe {
                let p = [x as f64 - a[0], y as f64 - a[1]];
                let t = if len2 > 0.0 { ((p[0] * d[0] + p[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let ex = p[0] - t * d[0];
                let ey = p[1] - t * d[1];
                if ex * ex + ey * ey <= half * half {
                    self.put(x, y, c);
                }
            }
        }
    }

    pub fn fill_triangle(&mut self, v: [[f64; 2]; 3], c: Rgb) {
        let Some((x0, y0, x1, y1)) = self.span(
            [v[0][0].min(v[1][0]).min(v[2][0]), v[0][1].min(v[1][1]).min(v[2][1])],
            [v[0][0].max(v[1][0]).max(v[2][0]), v[0][1].max(v[1][1]).max(v[2][1])],
        ) else {
            return;
        };
        let edge =
            |a: [f64; 2], b: [f64; 2], p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let area = edge(v[0], v[1], v[2]);
        if area == 0.0 {
            return;
        }
        for y in y0..=y1 {
            for x in x0..=x1 {
                let p = [x as f64, y as f64];
                let w = [edge(v[1], v[2], p), edge(v[2], v[0], p), edge(v[0], v[1], p)];
                let inside = if area > 0.0 { w.iter().all(|&e| e >= 0.0) } else { w.iter().all(|&e| e <= 0.0) };
                if inside {
                    self.put(x, y, c);
                }
            }
        }
    }

    /// Draws a solid arrow from `start` to `tip`. The head occupies
    /// `head_ratio` of the total length.
    pub fn draw_arrow(&mut self, start: [f64; 2], tip: [f64; 2], thickness: f64, head_ratio: f64, c: Rgb) {
        let d = [tip[0] - start[0], tip[1] - start[1]];
        let len = libm::hypot(d[0], d[1]);
        if len < 1e-9 {
            self.fill_circle(start, (thickness / 2.0).max(1.0), c);
            return;
        }
        let u = [d[0] / len, d[1] / len];
        let head_len = (head_ratio * len).max(thickness).min(len);
        let half_w = (head_len * 0.5).max(thickness);
        let base = [tip[0] - u[0] * head_len, tip[1] - u[1] * head_len];
        self.draw_line(start, base, thickness, c);
        let n = [-u[1], u[0]];
        self.fill_triangle(
            [
                tip,
                [base[0] + n[0] * half_w, base[1] + n[1] * half_w],
                [base[0] - n[0] * half_w, base[1] - n[1] * half_w],
            ],
            c,
        );
    }

    /// Writes decimal digits centered on `center`. Non-digit characters are
    /// skipped.
    pub fn draw_number(&mut self, center: [f64; 2], text: &str, glyph_height: u32, c: Rgb) {
        let scale = i64::from((glyph_height / GLYPH_H).max(1));
        let digits: Vec<usize> = text.bytes().filter(u8::is_ascii_digit).map(|b| usize::from(b - b'0')).collect();
        if digits.is_empty() {
            return;
        }
        let n = digits.len() as i64;
        let total_w = n * GLYPH_W as i64 * scale + (n - 1) * scale;
        let total_h = GLYPH_H as i64 * scale;
        let left = libm::round(center[0]) as i64 - total_w / 2;
        let top = libm::round(center[1]) as i64 - total_h / 2;
        for (k, &d) in digits.iter().enumerate() {
            let gx = left + k as i64 * (GLYPH_W as i64 + 1) * scale;
            for (row, bits) in DIGITS[d].iter().enumerate() {
                for col in 0..GLYPH_W {
                    if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                        for sy in 0..scale {
                            for sx in 0..scale {
                                self.put(gx + col as i64 * scale + sx, top + row as i64 * scale + sy, c);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Pixel size of `digits` characters rendered by [`draw_number`](Self::draw_number).
    pub fn number_extent(digits: usize, glyph_height: u32) -> (u32, u32) {
        let scale = (glyph_height / GLYPH_H).max(1);
        let n = digits.max(1) as u32;
        (n * GLYPH_W * scale + (n - 1) * scale, GLYPH_H * scale)
    }
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;

// 5x7 bitmap digits, one row per byte, MSB-first in the low five bits.
const DIGITS: [[u8; 7]; 10] = [
    [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
    [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
    [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
    [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
    [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
    [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
    [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
    [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
    [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
    [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
];

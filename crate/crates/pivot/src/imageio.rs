use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use pivot_core::Raster;

use crate::error::{CliError, Result};

/// Reads any PNG or JPEG as 8-bit RGB.
pub fn load_image(path: &Path) -> Result<Raster> {
    let img = image::open(path).map_err(|e| CliError::io(path, e))?.to_rgb8();
    let (w, h) = img.dimensions();
    Raster::from_raw(w, h, img.into_raw()).ok_or_else(|| CliError::io(path, "unexpected pixel buffer size"))
}

pub fn encode_png(raster: &Raster) -> Vec<u8> {
    let img = RgbImage::from_raw(raster.width(), raster.height(), raster.as_bytes().to_vec())
        .expect("raster buffer matches its dimensions");
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory cannot fail");
    out.into_inner()
}

pub fn save_png(raster: &Raster, path: &Path) -> Result<()> {
    std::fs::write(path, encode_png(raster)).map_err(|e| CliError::io(path, e))
}

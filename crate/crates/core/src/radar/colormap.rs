//! Viridis-style colour rendering of normalized maps, for inspection only.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::radar::RealMatrix;

/// Samples of the viridis colormap at t = 0, 1/8, ..., 1.
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Piecewise-linear colour for `t` in `[0, 1]` (clamped).
pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (VIRIDIS[i][k] * (1.0 - f) + VIRIDIS[i + 1][k] * f).round() as u8;
    }
    out
}

/// Writes an 8-bit PNG with range along the vertical axis (far range at the
/// top) and Doppler along the horizontal axis.
pub fn write_png(values: &RealMatrix, path: &Path) -> Result<()> {
    let mut img = RgbImage::new(values.cols as u32, values.rows as u32);
    for r in 0..values.rows {
        for c in 0..values.cols {
            let y = (values.rows - 1 - r) as u32;
            img.put_pixel(c as u32, y, Rgb(viridis(values.get(r, c))));
        }
    }
    img.save(path)
        .map_err(|e| Error::format(path, format!("PNG export failed: {e}")))
}

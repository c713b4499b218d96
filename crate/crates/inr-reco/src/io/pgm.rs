//! 8-bit binary PGM export for quick visual inspection.

use ndarray::Array2;
use std::fs;
use std::path::Path;

use crate::error::Result;

/// Write values expected in [0, 1] (clamped otherwise) as a P5 PGM.
pub fn write_pgm(path: &Path, image: &Array2<f64>) -> Result<()> {
    let (h, w) = image.dim();
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.reserve(h * w);
    for v in image.iter() {
        bytes.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    fs::write(path, bytes)?;
    Ok(())
}

//! Minimal PGM (P5) writers for depth maps and debug heatmaps.

use std::io::{self, Write};
use std::path::Path;

/// Writes a 16-bit PGM storing depth in millimeters. Non-finite depths
/// (no surface hit) are written as 0.
pub fn write_depth_pgm(path: &Path, depth_m: &[f64], width: usize, height: usize) -> io::Result<()> {
    assert_eq!(depth_m.len(), width * height);
    let mut buf = Vec::with_capacity(width * height * 2 + 32);
    write!(buf, "P5\n{width} {height}\n65535\n")?;
    for &d in depth_m {
        let mm = if d.is_finite() { (d * 1000.0).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        // PGM multi-byte samples are big-endian.
        buf.extend_from_slice(&mm.to_be_bytes());
    }
    std::fs::write(path, buf)
}

/// Writes an 8-bit PGM of `values` linearly rescaled so the maximum maps
/// to 255. An all-zero input produces an all-black image.
pub fn write_heatmap_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> io::Result<()> {
    assert_eq!(values.len(), width * height);
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut buf = Vec::with_capacity(width * height + 32);
    write!(buf, "P5\n{width} {height}\n255\n")?;
    for &v in values {
        buf.push((v.max(0.0) * scale).round().min(255.0) as u8);
    }
    std::fs::write(path, buf)
}

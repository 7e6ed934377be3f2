//! 8-bit frame export and import (PNG, or binary PGM/PPM).

use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

use crate::error::{Result, SciError};
use crate::model::VideoCube;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameFormat {
    Png,
    /// PGM for grayscale, PPM for colour.
    Pnm,
}

impl FrameFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "png" => Ok(FrameFormat::Png),
            "pgm" | "ppm" | "pnm" => Ok(FrameFormat::Pnm),
            other => Err(SciError::InvalidParameter(format!("unknown frame format '{other}'"))),
        }
    }
}

fn quantize<T: Real>(v: T) -> u8 {
    (v.to_f64_lossy().clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_err(path: &Path, e: image::ImageError) -> SciError {
    match e {
        image::ImageError::IoError(io) => SciError::io(path, io),
        other => SciError::Format(format!("{}: {other}", path.display())),
    }
}

/// Writes every frame as `{prefix}_{b:03}.{ext}` under `dir`; returns the
/// file paths in frame order.
pub fn export_frames<T: Real>(cube: &VideoCube<T>, dir: &Path, prefix: &str, format: FrameFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| SciError::io(dir, e))?;
    let (h, w, c, b) = cube.shape();
    let ext = match (format, c) {
        (FrameFormat::Png, _) => "png",
        (FrameFormat::Pnm, 1) => "pgm",
        (FrameFormat::Pnm, _) => "ppm",
    };
    let mut paths = Vec::with_capacity(b);
    for f in 0..b {
        let path = dir.join(format!("{prefix}_{f:03}.{ext}"));
        if c == 1 {
            let px: Vec<u8> = cube.plane(f, 0).iter().map(|&v| quantize(v)).collect();
            let img = GrayImage::from_raw(w as u32, h as u32, px).expect("buffer matches frame size");
            img.save(&path).map_err(|e| image_err(&path, e))?;
        } else {
            let n = h * w;
            let frame = cube.frame(f);
            let px: Vec<u8> = (0..n)
                .flat_map(|k| (0..3).map(move |ch| quantize(frame[ch * n + k])))
                .collect();
            let img = RgbImage::from_raw(w as u32, h as u32, px).expect("buffer matches frame size");
            img.save(&path).map_err(|e| image_err(&path, e))?;
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Reads 8-bit frames back into a cube with `channels` (1 or 3) channels.
pub fn import_frames<T: Real>(paths: &[PathBuf], channels: usize) -> Result<VideoCube<T>> {
    if paths.is_empty() {
        return Err(SciError::EmptyDataset);
    }
    let mut data = Vec::new();
    let mut dims = None;
    for path in paths {
        let img = image::open(path).map_err(|e| image_err(path, e))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if *dims.get_or_insert((h, w)) != (h, w) {
            return Err(SciError::DimensionMismatch(format!("{} differs in size", path.display())));
        }
        let scale = T::of(1.0 / 255.0);
        match channels {
            1 => data.extend(img.to_luma8().into_raw().into_iter().map(|p| T::of(p as f64) * scale)),
            3 => {
                let raw = img.to_rgb8().into_raw();
                for ch in 0..3 {
                    data.extend(raw.iter().skip(ch).step_by(3).map(|&p| T::of(p as f64) * scale));
                }
            }
            other => return Err(SciError::InvalidParameter(format!("{other} channels"))),
        }
    }
    let (h, w) = dims.expect("at least one frame");
    VideoCube::from_vec(h, w, channels, paths.len(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_pnm_roundtrip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        for c in [1, 3] {
            let data: Vec<f64> = (0..2 * c * 4 * 6).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
            let cube = VideoCube::from_vec(4, 6, c, 2, data).unwrap();
            for fmt in [FrameFormat::Png, FrameFormat::Pnm] {
                let paths = export_frames(&cube, dir.path(), &format!("f{c}"), fmt).unwrap();
                let back: VideoCube<f64> = import_frames(&paths, c).unwrap();
                assert!(back.max_abs_diff(&cube) <= 0.5 / 255.0 + 1e-12);
            }
        }
    }
}

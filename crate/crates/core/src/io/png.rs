//! 16-bit PNG depth maps in millimeters; 0 marks an invalid pixel.

use std::path::Path;

use image::{ImageBuffer, Luma};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Largest depth a 16-bit millimeter image can hold.
pub const MAX_PNG_DEPTH: f64 = u16::MAX as f64 / 1000.0;

/// Depth quantized the way [`write_depth_png`] stores it.
pub fn quantize_depth(d: &DepthMap) -> DepthMap {
    DepthMap::from_fn(*d.intrinsics(), |u, v| {
        d.get(u, v).and_then(|z| {
            let mm = (z * 1000.0).round();
            (mm >= 1.0 && mm <= u16::MAX as f64).then_some(mm / 1000.0)
        })
    })
}

pub fn write_depth_png(path: &Path, d: &DepthMap) -> Result<()> {
    let (w, h) = (d.width(), d.height());
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |u, v| {
        let mm = d
            .get(u as usize, v as usize)
            .map(|z| (z * 1000.0).round())
            .filter(|mm| *mm >= 1.0 && *mm <= u16::MAX as f64)
            .unwrap_or(0.0);
        Luma([mm as u16])
    });
    img.save(path)?;
    Ok(())
}

/// Reads a depth PNG; its size must match `intrinsics`.
pub fn read_depth_png(path: &Path, intrinsics: &CameraIntrinsics) -> Result<DepthMap> {
    let img = image::open(path)?;
    let layout = |reason: String| Error::Layout {
        path: path.to_path_buf(),
        reason,
    };
    let img = match img {
        image::DynamicImage::ImageLuma16(i) => i,
        other => return Err(layout(format!("expected 16-bit grayscale, found {:?}", other.color()))),
    };
    if img.width() as usize != intrinsics.width || img.height() as usize != intrinsics.height {
        return Err(layout(format!(
            "image is {}x{}, expected {}x{}",
            img.width(),
            img.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    Ok(DepthMap::from_fn(*intrinsics, |u, v| {
        let mm = img.get_pixel(u as u32, v as u32)[0];
        (mm > 0).then(|| mm as f64 / 1000.0)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_millimeter_exact() {
        let k = CameraIntrinsics::new(50.0, 50.0, 9.5, 7.5, 20, 16, 0.1).unwrap();
        let d = DepthMap::from_fn(k, |u, v| ((u + v) % 3 != 0).then(|| 0.5 + 0.0137 * (u * v) as f64));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        write_depth_png(&path, &d).unwrap();
        let back = read_depth_png(&path, &k).unwrap();
        assert_eq!(back, quantize_depth(&d));
        assert_eq!(back.mask(), d.mask());
        for (a, b) in back.values().iter().zip(d.values()) {
            assert!((a - b).abs() <= 0.0005 + 1e-12);
        }
    }

    #[test]
    fn wrong_size_names_the_file() {
        let k = CameraIntrinsics::new(50.0, 50.0, 9.5, 7.5, 20, 16, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.png");
        write_depth_png(&path, &DepthMap::invalid(k)).unwrap();
        let other = CameraIntrinsics { width: 21, ..k };
        match read_depth_png(&path, &other) {
            Err(Error::Layout { path: p, .. }) => assert_eq!(p, path),
            r => panic!("unexpected {r:?}"),
        }
    }
}

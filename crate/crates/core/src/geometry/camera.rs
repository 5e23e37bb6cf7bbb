use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics of the left camera of a rectified stereo pair.
///
/// Pixel `(u, v)` has its center at integer coordinates; `u` runs along the
/// image width, `v` along the height. The camera looks down `+z`, `x` points
/// right and `y` points down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Stereo baseline in meters.
    pub baseline: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        baseline: f64,
    ) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            baseline,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with a centered principal point and the given horizontal
    /// field of view in degrees; square pixels.
    pub fn from_hfov(width: usize, height: usize, hfov_deg: f64, baseline: f64) -> Result<Self> {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
            baseline,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.baseline]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 || self.baseline <= 0.0 {
            return Err(Error::InvalidParameter(
                "fx, fy and baseline must be positive".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidParameter(
                "principal point must lie inside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Focal length times baseline, the constant of `depth = f b / disparity`.
    pub fn focal_baseline(&self) -> f64 {
        self.fx * self.baseline
    }

    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        )
    }

    /// Continuous pixel coordinates of a camera-frame point with `z > 0`.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Nearest pixel to a camera-frame point, when it falls inside the image.
    pub fn project_to_pixel(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let (u, v) = self.project(p)?;
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4, 0.1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 4, 4, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4, 0.1).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 3.9, 1.0, 4, 4, 0.1).is_ok());
    }

    #[test]
    fn hfov_focal_length() {
        let k = CameraIntrinsics::from_hfov(200, 100, 90.0, 0.1).unwrap();
        assert!((k.fx - 100.0).abs() < 1e-9);
    }

    #[test]
    fn projection_inverts_backprojection() {
        let k = CameraIntrinsics::new(500.0, 480.0, 320.0, 240.0, 640, 480, 0.03).unwrap();
        let p = k.backproject(100.0, 50.0, 3.0);
        let (u, v) = k.project(&p).unwrap();
        assert!((u - 100.0).abs() < 1e-9 && (v - 50.0).abs() < 1e-9);
        assert!(k.project(&Vector3::new(0.0, 0.0, -1.0)).is_none());
    }
}

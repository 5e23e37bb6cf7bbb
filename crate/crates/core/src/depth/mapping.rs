//! Disparity/depth conversion and the output mappings applied to a network's
//! `tanh` activation map.

use rayon::prelude::*;

use crate::depth::maps::{DepthMap, DisparityMap};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Disparities below this many pixels are treated as invalid.
pub const DISPARITY_FLOOR: f64 = 0.1;

/// `depth = fx * baseline / disparity` on every valid pixel.
pub fn disparity_to_depth(d: &DisparityMap) -> DepthMap {
    let k = *d.intrinsics();
    let fb = k.focal_baseline();
    let values: Vec<f64> = d
        .values()
        .par_iter()
        .zip(d.mask().par_iter())
        .map(|(&disp, &ok)| if ok && disp >= DISPARITY_FLOOR { fb / disp } else { 0.0 })
        .collect();
    DepthMap::from_values(k, values).expect("shape preserved")
}

/// `disparity = fx * baseline / depth`; the inverse of [`disparity_to_depth`].
pub fn depth_to_disparity(d: &DepthMap) -> DisparityMap {
    let k = *d.intrinsics();
    let fb = k.focal_baseline();
    let values: Vec<f64> = d
        .values()
        .par_iter()
        .zip(d.mask().par_iter())
        .map(|(&depth, &ok)| {
            let disp = if ok { fb / depth } else { 0.0 };
            if disp >= DISPARITY_FLOOR { disp } else { 0.0 }
        })
        .collect();
    DisparityMap::from_values(k, values).expect("shape preserved")
}

/// How a `tanh` output `w` in (-1, 1] is turned into a disparity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TanhMapping {
    /// `disp = max_disp (w + 1) / 2`; implied depth is unbounded above.
    MaxDisparity { max_disp: f64 },
    /// `disp = 2 f b / (max_dist (w + 1))`; implied depth `max_dist (w + 1) / 2`
    /// lies in `(0, max_dist]`.
    MaxDistance { max_dist: f64 },
}

impl TanhMapping {
    fn bound(&self) -> f64 {
        match *self {
            TanhMapping::MaxDisparity { max_disp } => max_disp,
            TanhMapping::MaxDistance { max_dist } => max_dist,
        }
    }

    pub fn disparity(&self, w: f64, focal_baseline: f64) -> f64 {
        match *self {
            TanhMapping::MaxDisparity { max_disp } => max_disp * (w + 1.0) / 2.0,
            TanhMapping::MaxDistance { max_dist } => 2.0 * focal_baseline / (max_dist * (w + 1.0)),
        }
    }

    /// Depth implied by `w`, evaluated in closed form.
    pub fn implied_depth(&self, w: f64, focal_baseline: f64) -> f64 {
        match *self {
            TanhMapping::MaxDisparity { max_disp } => 2.0 * focal_baseline / (max_disp * (w + 1.0)),
            TanhMapping::MaxDistance { max_dist } => max_dist * (w + 1.0) / 2.0,
        }
    }
}

/// Maps a row-major `tanh` grid to a disparity map.
///
/// Fails with [`Error::Domain`] when any `w <= -1` (or `w > 1`, or NaN).
pub fn map_tanh_output(
    w: &[f64],
    mapping: TanhMapping,
    intrinsics: &CameraIntrinsics,
) -> Result<DisparityMap> {
    if !(mapping.bound() > 0.0) {
        return Err(Error::InvalidParameter("mapping bound must be positive".into()));
    }
    if w.len() != intrinsics.pixel_count() {
        return Err(Error::ShapeMismatch(format!(
            "tanh map has {} entries, image has {}",
            w.len(),
            intrinsics.pixel_count()
        )));
    }
    if let Some(bad) = w.iter().find(|&&x| !(x > -1.0 && x <= 1.0)) {
        return Err(Error::Domain(format!("tanh output {bad} not in (-1, 1]")));
    }
    let fb = intrinsics.focal_baseline();
    let values = w.iter().map(|&x| mapping.disparity(x, fb)).collect();
    DisparityMap::from_values(*intrinsics, values)
}

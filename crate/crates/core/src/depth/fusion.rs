//! Pixel-wise fusion of two disparity estimates of the same stereo pair.
//!
//! The default rule is a deterministic, hand-written stand-in for a learned
//! fusion network; anything implementing [`DisparityFusion`] can replace it.

use crate::depth::maps::DisparityMap;
use crate::error::{Error, Result};

pub trait DisparityFusion {
    /// `intensity` is the row-major reference image of the left camera.
    fn fuse(&self, a: &DisparityMap, b: &DisparityMap, intensity: &[f64]) -> Result<DisparityMap>;
}

/// Picks, per pixel, the input that agrees better with its own 3x3
/// neighbourhood, weighting neighbours by intensity similarity to the centre.
/// Ties fall back to the median of the two values (their mean).
#[derive(Debug, Clone, Copy)]
pub struct GradientConsistencyFusion {
    /// Scale of disparity disagreement, in pixels.
    pub disparity_scale: f64,
    /// Relative tolerance under which two consistency scores count as equal.
    pub tie_tolerance: f64,
}

impl Default for GradientConsistencyFusion {
    fn default() -> Self {
        Self {
            disparity_scale: 1.0,
            tie_tolerance: 1e-12,
        }
    }
}

impl GradientConsistencyFusion {
    fn consistency(&self, m: &DisparityMap, intensity: &[f64], u: usize, v: usize, centre: f64) -> f64 {
        let (w, h) = (m.width() as isize, m.height() as isize);
        let i0 = intensity[v * m.width() + u];
        let mut score = 0.0;
        for dv in -1isize..=1 {
            for du in -1isize..=1 {
                if du == 0 && dv == 0 {
                    continue;
                }
                let (qu, qv) = (u as isize + du, v as isize + dv);
                if qu < 0 || qv < 0 || qu >= w || qv >= h {
                    continue;
                }
                let (qu, qv) = (qu as usize, qv as usize);
                if let Some(d) = m.get(qu, qv) {
                    let weight = 1.0 / (1.0 + (intensity[qv * m.width() + qu] - i0).abs());
                    score += weight * (-(d - centre).abs() / self.disparity_scale).exp();
                }
            }
        }
        score
    }
}

impl DisparityFusion for GradientConsistencyFusion {
    fn fuse(&self, a: &DisparityMap, b: &DisparityMap, intensity: &[f64]) -> Result<DisparityMap> {
        if a.intrinsics() != b.intrinsics() {
            return Err(Error::ShapeMismatch("disparity maps differ in size or intrinsics".into()));
        }
        if intensity.len() != a.intrinsics().pixel_count() {
            return Err(Error::ShapeMismatch(format!(
                "intensity has {} pixels, maps have {}",
                intensity.len(),
                a.intrinsics().pixel_count()
            )));
        }
        Ok(DisparityMap::from_fn(*a.intrinsics(), |u, v| {
            match (a.get(u, v), b.get(u, v)) {
                (Some(x), Some(y)) => {
                    let ca = self.consistency(a, intensity, u, v, x);
                    let cb = self.consistency(b, intensity, u, v, y);
                    if (ca - cb).abs() <= self.tie_tolerance * ca.abs().max(cb.abs()).max(1.0) {
                        Some((x + y) / 2.0)
                    } else if ca > cb {
                        Some(x)
                    } else {
                        Some(y)
                    }
                }
                (Some(x), None) => Some(x),
                (None, Some(y)) => Some(y),
                (None, None) => None,
            }
        }))
    }
}

/// Fuses with [`GradientConsistencyFusion`] defaults.
pub fn fuse_disparities(a: &DisparityMap, b: &DisparityMap, intensity: &[f64]) -> Result<DisparityMap> {
    GradientConsistencyFusion::default().fuse(a, b, intensity)
}

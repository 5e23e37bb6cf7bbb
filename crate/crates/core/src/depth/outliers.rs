//! Radius and statistical outlier removal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::spatial::PointIndex;

/// Which clouds the post-processing outlier filter runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutlierScope {
    Single,
    Full,
    #[default]
    Both,
}

/// Depth post-processing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    /// Depths beyond this many meters are discarded.
    pub max_dist: f64,
    /// Neighbour search radius in meters.
    pub radius: f64,
    /// Minimum number of other points within `radius`.
    pub min_neighbors: usize,
    /// Neighbours used for the mean-distance statistic.
    pub k_neighbors: usize,
    /// Points whose mean neighbour distance exceeds `mean + dist_ratio * std`
    /// of that statistic are dropped.
    pub dist_ratio: f64,
    pub scope: OutlierScope,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            max_dist: 5.0,
            radius: 0.05,
            min_neighbors: 20,
            k_neighbors: 20,
            dist_ratio: 1.5,
            scope: OutlierScope::Both,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_dist > 0.0 && self.radius > 0.0 && self.dist_ratio > 0.0)
            || self.min_neighbors == 0
            || self.k_neighbors == 0
        {
            return Err(Error::InvalidParameter("fusion parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Indices of points with at least `min_neighbors` other points within `radius`.
pub fn radius_inliers(c: &PointCloud, radius: f64, min_neighbors: usize) -> Vec<usize> {
    let index = PointIndex::new(&c.points);
    (0..c.len())
        .into_par_iter()
        .filter(|&i| index.count_within(&c.points[i], radius).saturating_sub(1) >= min_neighbors)
        .collect()
}

/// Indices of points whose mean distance to their `k` nearest neighbours is
/// at most `mean + ratio * std` of that quantity over the cloud (sample
/// standard deviation).
pub fn statistical_inliers(c: &PointCloud, k: usize, ratio: f64) -> Vec<usize> {
    let n = c.len();
    if n < 2 {
        return (0..n).collect();
    }
    let index = PointIndex::new(&c.points);
    let means: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            // first hit is the point itself
            let nn = index.nearest_k(&c.points[i], k + 1);
            let dists: Vec<f64> = nn.iter().filter(|(j, _)| *j != i).map(|(_, d)| *d).take(k).collect();
            dists.iter().sum::<f64>() / dists.len() as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / n as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    // relative slack so perfectly uniform clouds are not split by rounding
    let threshold = (mean + ratio * var.sqrt()) * (1.0 + 1e-12);
    (0..n).filter(|&i| means[i] <= threshold).collect()
}

/// Radius pass followed by the statistical pass on its survivors.
pub fn remove_outliers(c: &PointCloud, p: &FusionParams) -> PointCloud {
    let first = c.select(&radius_inliers(c, p.radius, p.min_neighbors));
    first.select(&statistical_inliers(&first, p.k_neighbors, p.dist_ratio))
}

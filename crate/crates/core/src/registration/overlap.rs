use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Pose};
use crate::spatial::PointIndex;

/// Fraction of `from` points that, moved by `t`, have an indexed point within
/// `threshold`.
fn covered_fraction(from: &PointCloud, t: &Pose, to_index: &PointIndex, threshold: f64) -> f64 {
    let hits = from
        .points
        .par_iter()
        .filter(|p| to_index.has_within(&t.transform_point(p), threshold))
        .count();
    hits as f64 / from.len() as f64
}

/// Overlap of two clouds after moving `source` by `t`.
///
/// Each cloud's overlap is the share of its points that have a partner in the
/// other cloud within `dist_threshold`; the pair's overlap is that of the
/// cloud with fewer points. Equal sizes take the smaller of the two shares.
pub fn overlap_percentage(source: &PointCloud, target: &PointCloud, t: &Pose, dist_threshold: f64) -> Result<f64> {
    overlap_with_indices(
        source,
        &PointIndex::new(&source.points),
        target,
        &PointIndex::new(&target.points),
        t,
        dist_threshold,
    )
}

/// [`overlap_percentage`] with prebuilt indices over the untransformed
/// clouds. The target share is measured by moving target points by `t^-1`.
pub fn overlap_with_indices(
    source: &PointCloud,
    source_index: &PointIndex,
    target: &PointCloud,
    target_index: &PointIndex,
    t: &Pose,
    dist_threshold: f64,
) -> Result<f64> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(dist_threshold > 0.0) {
        return Err(Error::InvalidParameter("overlap threshold must be positive".into()));
    }
    let beta_s = || covered_fraction(source, t, target_index, dist_threshold);
    let beta_t = || covered_fraction(target, &t.inverse(), source_index, dist_threshold);
    Ok(match source.len().cmp(&target.len()) {
        std::cmp::Ordering::Less => beta_s(),
        std::cmp::Ordering::Greater => beta_t(),
        std::cmp::Ordering::Equal => beta_s().min(beta_t()),
    })
}

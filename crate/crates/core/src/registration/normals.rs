use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::geometry::PointCloud;
use crate::spatial::PointIndex;

/// Neighbourhoods with fewer points (the query point included) get no normal.
pub const MIN_NORMAL_SUPPORT: usize = 3;

/// Per-point normal from the smallest-eigenvalue eigenvector of the
/// neighbourhood covariance, flipped to face the frame origin.
pub fn point_normals(c: &PointCloud, radius: f64) -> Vec<Option<Vector3<f64>>> {
    let index = PointIndex::new(&c.points);
    c.points
        .par_iter()
        .map(|p| {
            let nb = index.within(p, radius);
            if nb.len() < MIN_NORMAL_SUPPORT {
                return None;
            }
            let mean: Vector3<f64> = nb.iter().map(|(j, _)| c.points[*j]).sum::<Vector3<f64>>() / nb.len() as f64;
            let mut cov = Matrix3::zeros();
            for (j, _) in &nb {
                let d = c.points[*j] - mean;
                cov += d * d.transpose();
            }
            let eig = SymmetricEigen::new(cov);
            let (k, _) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))?;
            let mut n: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
            let len = n.norm();
            if !(len > 0.0) {
                return None;
            }
            n /= len;
            if n.dot(&-p) < 0.0 {
                n = -n;
            }
            Some(n)
        })
        .collect()
}

/// Cloud restricted to the points that received a normal, with normals attached.
pub fn estimate_normals(c: &PointCloud, radius: f64) -> PointCloud {
    let normals = point_normals(c, radius);
    let keep: Vec<usize> = (0..c.len()).filter(|&i| normals[i].is_some()).collect();
    let mut out = c.select(&keep);
    out.clear_normals();
    out.with_normals(keep.iter().map(|&i| normals[i].unwrap()).collect())
        .expect("unit normals")
}

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::geometry::PointCloud;

/// Replaces the points in each occupied voxel by their centroid. Normals, if
/// present, are averaged and renormalized (dropped for voxels where they
/// cancel). Output order follows the voxel keys, so it is deterministic.
pub fn voxel_downsample(c: &PointCloud, voxel: f64) -> PointCloud {
    assert!(voxel > 0.0, "voxel size must be positive");
    let mut cells: HashMap<[i64; 3], (Vector3<f64>, Vector3<f64>, usize)> = HashMap::new();
    let normals = c.normals();
    for (i, p) in c.points.iter().enumerate() {
        let key = [
            (p.x / voxel).floor() as i64,
            (p.y / voxel).floor() as i64,
            (p.z / voxel).floor() as i64,
        ];
        let e = cells.entry(key).or_insert((Vector3::zeros(), Vector3::zeros(), 0));
        e.0 += p;
        if let Some(ns) = normals {
            e.1 += ns[i];
        }
        e.2 += 1;
    }
    let mut keys: Vec<_> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut points = Vec::with_capacity(keys.len());
    let mut out_normals = Vec::with_capacity(keys.len());
    for key in keys {
        let (sum, nsum, count) = cells[&key];
        let n = nsum.norm();
        if normals.is_some() && n < 1e-12 {
            continue;
        }
        points.push(sum / count as f64);
        out_normals.push(nsum / n);
    }
    let out = PointCloud::new(points, c.frame.clone(), c.view);
    if normals.is_some() {
        out.with_normals(out_normals).expect("unit normals")
    } else {
        out
    }
}

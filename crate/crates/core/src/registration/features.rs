//! Fast point feature histograms (33 bins: three 11-bin angle histograms).

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::spatial::PointIndex;

pub const FPFH_DIM: usize = 33;
const BINS: usize = 11;

pub type Descriptor = [f64; FPFH_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRadii {
    pub normal: f64,
    pub feature: f64,
}

/// Keypoints with one FPFH descriptor each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureCloud {
    pub points: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub descriptors: Vec<Descriptor>,
    pub normal_radius: f64,
    pub feature_radius: f64,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Darboux-frame angles `(theta, alpha, phi)` between two oriented points,
/// or `None` when the pair is degenerate.
fn pair_features(
    p1: &Vector3<f64>,
    n1: &Vector3<f64>,
    p2: &Vector3<f64>,
    n2: &Vector3<f64>,
) -> Option<[f64; 3]> {
    let mut d = p2 - p1;
    let dist = d.norm();
    if dist == 0.0 {
        return None;
    }
    let a1 = n1.dot(&d) / dist;
    let a2 = n2.dot(&d) / dist;
    // the source is the point whose normal makes the smaller angle with the line
    let (u, nt, phi) = if a1.abs().acos() > a2.abs().acos() {
        d = -d;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = d.cross(u);
    let vn = v.norm();
    if vn == 0.0 {
        return None;
    }
    let v = v / vn;
    let w = u.cross(&v);
    let alpha = v.dot(nt);
    let theta = w.dot(nt).atan2(u.dot(nt));
    Some([theta, alpha, phi])
}

fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = ((value - lo) / (hi - lo) * BINS as f64).floor();
    (b.max(0.0) as usize).min(BINS - 1)
}

fn spfh(i: usize, points: &[Vector3<f64>], normals: &[Vector3<f64>], neighbours: &[usize]) -> Descriptor {
    let mut h = [0.0; FPFH_DIM];
    let others = neighbours.iter().filter(|&&j| j != i).count();
    if others == 0 {
        return h;
    }
    let incr = 100.0 / others as f64;
    for &j in neighbours.iter().filter(|&&j| j != i) {
        if let Some([theta, alpha, phi]) = pair_features(&points[i], &normals[i], &points[j], &normals[j]) {
            h[bin(theta, -std::f64::consts::PI, std::f64::consts::PI)] += incr;
            h[BINS + bin(alpha, -1.0, 1.0)] += incr;
            h[2 * BINS + bin(phi, -1.0, 1.0)] += incr;
        }
    }
    h
}

/// FPFH descriptor for every point of a cloud that carries normals.
///
/// Each descriptor is the point's own simplified histogram plus the
/// inverse-distance-weighted histograms of its neighbours within
/// `radii.feature`, each 11-bin block of the neighbour sum rescaled to 100.
pub fn compute_features(c: &PointCloud, radii: &FeatureRadii) -> Result<FeatureCloud> {
    let Some(normals) = c.normals() else {
        if c.is_empty() {
            return Ok(FeatureCloud {
                normal_radius: radii.normal,
                feature_radius: radii.feature,
                ..Default::default()
            });
        }
        return Err(Error::MissingNormals);
    };
    let index = PointIndex::new(&c.points);
    let neighbourhoods: Vec<Vec<(usize, f64)>> = c
        .points
        .par_iter()
        .map(|p| index.within(p, radii.feature))
        .collect();
    let simple: Vec<Descriptor> = (0..c.len())
        .into_par_iter()
        .map(|i| {
            let ids: Vec<usize> = neighbourhoods[i].iter().map(|x| x.0).collect();
            spfh(i, &c.points, normals, &ids)
        })
        .collect();
    let descriptors: Vec<Descriptor> = (0..c.len())
        .into_par_iter()
        .map(|i| {
            let mut f = [0.0; FPFH_DIM];
            let mut sums = [0.0; 3];
            for &(j, dist) in &neighbourhoods[i] {
                if j == i || dist == 0.0 {
                    continue;
                }
                let w = 1.0 / dist;
                for k in 0..FPFH_DIM {
                    let val = simple[j][k] * w;
                    sums[k / BINS] += val;
                    f[k] += val;
                }
            }
            for s in sums.iter_mut() {
                *s = if *s != 0.0 { 100.0 / *s } else { 0.0 };
            }
            for k in 0..FPFH_DIM {
                f[k] = f[k] * sums[k / BINS] + simple[i][k];
            }
            f
        })
        .collect();
    Ok(FeatureCloud {
        points: c.points.clone(),
        normals: normals.to_vec(),
        descriptors,
        normal_radius: radii.normal,
        feature_radius: radii.feature,
    })
}

use nalgebra::{Matrix3, Vector3};

use crate::geometry::Pose;

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
/// Returns `None` for fewer than three pairs.
pub fn fit_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Option<Pose> {
    assert_eq!(src.len(), dst.len());
    if src.len() < 3 {
        return None;
    }
    let n = src.len() as f64;
    let cs: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let cd: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let sign = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose();
    let t = cd - r * cs;
    Some(Pose::new(r, t))
}

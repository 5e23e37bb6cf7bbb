use crate::depth::maps::DepthMap;
use crate::geometry::{CameraIntrinsics, PointCloud, ViewKind};

pub const CAMERA_FRAME: &str = "camera";

/// One point per valid pixel, in the camera frame:
/// `X = (u - cx) D / fx`, `Y = (v - cy) D / fy`, `Z = D`.
pub fn backproject(d: &DepthMap) -> PointCloud {
    let k = d.intrinsics();
    let points = d
        .iter_valid()
        .map(|(u, v, z)| k.backproject(u as f64, v as f64, z))
        .collect();
    PointCloud::new(points, CAMERA_FRAME, ViewKind::Single)
}

/// Z-buffer projection of a camera-frame cloud: each point lands on its
/// nearest pixel, and the smallest depth wins. Points behind the camera or
/// outside the image are dropped.
pub fn project(c: &PointCloud, intr: &CameraIntrinsics) -> DepthMap {
    let mut zbuf = vec![f64::INFINITY; intr.pixel_count()];
    for p in &c.points {
        if let Some((u, v)) = intr.project_to_pixel(p) {
            let i = v * intr.width + u;
            if p.z < zbuf[i] {
                zbuf[i] = p.z;
            }
        }
    }
    let valid = zbuf.iter().map(|z| z.is_finite()).collect();
    DepthMap::new(*intr, zbuf, valid).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 90.0, 20.0, 15.0, 40, 30, 0.1).unwrap()
    }

    #[test]
    fn principal_ray_and_45_degrees() {
        let intr = CameraIntrinsics::new(2.0, 2.0, 1.0, 1.0, 4, 3, 0.1).unwrap();
        let d = DepthMap::from_fn(intr, |u, v| match (u, v) {
            (1, 1) => Some(2.0),
            (3, 1) => Some(1.0),
            _ => None,
        });
        let c = backproject(&d);
        assert_eq!(c.points, vec![Vector3::new(0.0, 0.0, 2.0), Vector3::new(1.0, 0.0, 1.0)]);
        assert_eq!(c.frame, CAMERA_FRAME);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let c = PointCloud::from_points(vec![
            Vector3::new(0.0, 0.0, 3.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(100.0, 0.0, 1.0),
        ]);
        let d = project(&c, &k());
        assert_eq!(d.get(20, 15), Some(1.0));
        assert_eq!(d.valid_count(), 1);
    }

    #[test]
    fn empty_cloud_projects_to_invalid_map() {
        let d = project(&PointCloud::default(), &k());
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn round_trip_reproduces_depth() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let intr = k();
        let d = DepthMap::from_fn(intr, |_, _| rng.random_bool(0.7).then(|| rng.random_range(0.5..8.0)));
        let back = project(&backproject(&d), &intr);
        assert_eq!(back.mask(), d.mask());
        for (a, b) in back.values().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

//! Analytic garden scenes and a ray-casting renderer for the camera ring.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, RingExtrinsics};
use crate::error::{Error, Result};
use crate::geometry::pose::rot_z;
use crate::geometry::{CameraIntrinsics, PointCloud, Pose, ViewKind};

const HIT_EPS: f64 = 1e-9;

/// Solid primitive. Planes are one-sided rectangles in their local xy plane;
/// cylinders run along their local z axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Plane { pose: Pose, half_extent: [f64; 2] },
    Cuboid { pose: Pose, half_size: [f64; 3] },
    Sphere { center: Vector3<f64>, radius: f64 },
    Cylinder { pose: Pose, radius: f64, half_height: f64 },
}

impl Primitive {
    /// Smallest ray parameter `s > 0` with `origin + s * dir` on the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Plane { pose, half_extent } => {
                let inv = pose.inverse();
                let (o, d) = (inv.transform_point(origin), inv.transform_vector(dir));
                if d.z.abs() < 1e-15 {
                    return None;
                }
                let s = -o.z / d.z;
                let p = o + d * s;
                (s > HIT_EPS && p.x.abs() <= half_extent[0] && p.y.abs() <= half_extent[1]).then_some(s)
            }
            Primitive::Cuboid { pose, half_size } => {
                let inv = pose.inverse();
                let (o, d) = (inv.transform_point(origin), inv.transform_vector(dir));
                let (mut near, mut far) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k].abs() < 1e-15 {
                        if o[k].abs() > half_size[k] {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-half_size[k] - o[k]) / d[k], (half_size[k] - o[k]) / d[k]);
                    near = near.max(a.min(b));
                    far = far.min(a.max(b));
                }
                if near > far {
                    return None;
                }
                [near, far].into_iter().find(|s| *s > HIT_EPS)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let r = disc.sqrt();
                [(-b - r) / a, (-b + r) / a].into_iter().find(|s| *s > HIT_EPS)
            }
            Primitive::Cylinder { pose, radius, half_height } => {
                let inv = pose.inverse();
                let (o, d) = (inv.transform_point(origin), inv.transform_vector(dir));
                let mut best: Option<f64> = None;
                let mut consider = |s: f64| {
                    if s > HIT_EPS && best.is_none_or(|b| s < b) {
                        best = Some(s);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 1e-15 {
                    let b = o.x * d.x + o.y * d.y;
                    let c = o.x * o.x + o.y * o.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        for s in [(-b - disc.sqrt()) / a, (-b + disc.sqrt()) / a] {
                            if (o.z + s * d.z).abs() <= *half_height {
                                consider(s);
                            }
                        }
                    }
                }
                if d.z.abs() > 1e-15 {
                    for cap in [-half_height, *half_height] {
                        let s = (cap - o.z) / d.z;
                        let p = o + d * s;
                        if p.x * p.x + p.y * p.y <= radius * radius {
                            consider(s);
                        }
                    }
                }
                best
            }
        }
    }

    /// Unsigned distance from `p` to the primitive's surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::Plane { pose, half_extent } => {
                let q = pose.inverse().transform_point(p);
                let c = Vector3::new(q.x.clamp(-half_extent[0], half_extent[0]), q.y.clamp(-half_extent[1], half_extent[1]), 0.0);
                (q - c).norm()
            }
            Primitive::Cuboid { pose, half_size } => {
                let q = pose.inverse().transform_point(p);
                let d = Vector3::new(q.x.abs() - half_size[0], q.y.abs() - half_size[1], q.z.abs() - half_size[2]);
                let outside = d.map(|x| x.max(0.0)).norm();
                let inside = d.max().min(0.0);
                (outside + inside).abs()
            }
            Primitive::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Primitive::Cylinder { pose, radius, half_height } => {
                let q = pose.inverse().transform_point(p);
                let (dr, dz) = ((q.x * q.x + q.y * q.y).sqrt() - radius, q.z.abs() - half_height);
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                (outside + dr.max(dz).min(0.0)).abs()
            }
        }
    }
}

/// Per-pixel Gaussian depth noise and random dropout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Meters.
    pub depth_sigma: f64,
    /// Probability that a pixel is marked invalid.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            depth_sigma: 0.01,
            dropout: 0.01,
            seed: 1,
        }
    }
}

/// Parameters of the generated garden: a square ground plane with hedges,
/// trees, bushes and a post, and a rig driven around a closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GardenParams {
    pub frames: usize,
    /// Side of the square ground plane (meters).
    pub ground_size: f64,
    /// Semi-axes of the elliptical route (meters).
    pub route_radii: [f64; 2],
    /// Angle along the ellipse between consecutive frames (degrees); 36
    /// frames close the loop at the default.
    pub route_step_deg: f64,
    pub camera_height: f64,
    pub ring_radius: f64,
    pub cameras: usize,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub baseline: f64,
    /// Extra rocks, posts and planters scattered off the route.
    pub clutter: usize,
    pub clutter_seed: u64,
    pub noise: NoiseModel,
}

impl Default for GardenParams {
    fn default() -> Self {
        Self {
            frames: 12,
            ground_size: 10.0,
            route_radii: [2.4, 2.0],
            route_step_deg: 10.0,
            camera_height: 0.8,
            ring_radius: 0.1,
            cameras: 5,
            width: 320,
            height: 240,
            hfov_deg: 72.0,
            baseline: 0.03,
            clutter: 40,
            clutter_seed: 11,
            noise: NoiseModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    /// World←rig poses along the route.
    pub trajectory: Vec<Pose>,
    pub rig: RingExtrinsics,
    pub intrinsics: CameraIntrinsics,
    pub noise: NoiseModel,
}

/// World←rig pose at `position` heading along `heading` radians (world z up;
/// the rig's z axis points forward and its y axis down).
pub fn rig_pose(position: Vector3<f64>, heading: f64) -> Pose {
    let (s, c) = heading.sin_cos();
    let r = Matrix3::from_columns(&[Vector3::new(s, -c, 0.0), Vector3::new(0.0, 0.0, -1.0), Vector3::new(c, s, 0.0)]);
    Pose::new(r, position)
}

fn upright(x: f64, y: f64, z: f64, yaw_deg: f64) -> Pose {
    Pose::new(rot_z(yaw_deg), Vector3::new(x, y, z))
}

impl SyntheticScene {
    pub fn new(primitives: Vec<Primitive>, trajectory: Vec<Pose>, rig: RingExtrinsics, intrinsics: CameraIntrinsics, noise: NoiseModel) -> Result<Self> {
        if trajectory.is_empty() {
            return Err(Error::InvalidParameter("scene trajectory is empty".into()));
        }
        if !(noise.depth_sigma >= 0.0) || !(0.0..=1.0).contains(&noise.dropout) {
            return Err(Error::InvalidParameter("noise sigma must be >= 0 and dropout in [0, 1]".into()));
        }
        Ok(Self {
            primitives,
            trajectory,
            rig,
            intrinsics,
            noise,
        })
    }

    pub fn garden(p: &GardenParams) -> Result<Self> {
        if p.frames == 0 {
            return Err(Error::InvalidParameter("garden needs at least one frame".into()));
        }
        if !(p.route_step_deg.is_finite()) {
            return Err(Error::InvalidParameter("route step must be finite".into()));
        }
        let half = p.ground_size / 2.0;
        let hedge = |x, y, yaw, l: f64, w: f64, h: f64| Primitive::Cuboid {
            pose: upright(x, y, h / 2.0, yaw),
            half_size: [l / 2.0, w / 2.0, h / 2.0],
        };
        let trunk = |x, y, h: f64, r| Primitive::Cylinder {
            pose: upright(x, y, h / 2.0, 0.0),
            radius: r,
            half_height: h / 2.0,
        };
        let crown = |x, y, z, r| Primitive::Sphere {
            center: Vector3::new(x, y, z),
            radius: r,
        };
        let mut primitives = vec![
            Primitive::Plane {
                pose: Pose::identity(),
                half_extent: [half, half],
            },
            // inside the loop
            hedge(-0.5, 0.7, 20.0, 1.6, 0.5, 0.9),
            trunk(0.4, -0.3, 1.4, 0.12),
            crown(0.4, -0.3, 1.6, 0.5),
            // outside the loop
            hedge(3.9, 1.0, 80.0, 2.4, 0.5, 1.0),
            hedge(-1.5, -3.9, 10.0, 3.0, 0.6, 0.8),
            hedge(4.0, -3.2, 35.0, 0.8, 0.8, 0.5),
            trunk(-4.0, 2.0, 1.5, 0.15),
            crown(-4.0, 2.0, 1.8, 0.6),
            trunk(1.5, 4.1, 1.2, 0.1),
            crown(1.5, 4.1, 1.4, 0.45),
            trunk(-3.8, -1.5, 1.2, 0.3),
            crown(2.6, -4.0, 0.3, 0.6),
            crown(-2.8, 4.0, 0.2, 0.45),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(p.clutter_seed);
        let [ra, rb] = p.route_radii;
        let mut placed = 0;
        while placed < p.clutter {
            let (x, y) = (rng.random_range(-half..half), rng.random_range(-half..half));
            // within view of the route but off the path itself
            let e = ((x / ra).powi(2) + (y / rb).powi(2)).sqrt();
            let off = (e - 1.0).abs() * ra.min(rb);
            if !(0.6..3.0).contains(&off) {
                continue;
            }
            let yaw = rng.random_range(0.0..180.0);
            primitives.push(match rng.random_range(0..3) {
                0 => {
                    let r = rng.random_range(0.1..0.35);
                    crown(x, y, 0.3 * r, r)
                }
                1 => trunk(x, y, rng.random_range(0.4..1.2), rng.random_range(0.04..0.12)),
                _ => {
                    let (l, w) = (rng.random_range(0.2..0.7), rng.random_range(0.2..0.5));
                    hedge(x, y, yaw, l, w, rng.random_range(0.2..0.6))
                }
            });
            placed += 1;
        }
        let trajectory = (0..p.frames)
            .map(|k| {
                let a = (k as f64 * p.route_step_deg).to_radians();
                let pos = Vector3::new(p.route_radii[0] * a.cos(), p.route_radii[1] * a.sin(), p.camera_height);
                // tangent of the ellipse, counter-clockwise
                let heading = (p.route_radii[1] * a.cos()).atan2(-p.route_radii[0] * a.sin());
                rig_pose(pos, heading)
            })
            .collect();
        let rig = RingExtrinsics::ring(p.cameras, p.ring_radius)?;
        let intrinsics = CameraIntrinsics::from_hfov(p.width, p.height, p.hfov_deg, p.baseline)?;
        Self::new(primitives, trajectory, rig, intrinsics, p.noise)
    }

    pub fn frame_count(&self) -> usize {
        self.trajectory.len()
    }

    /// First hit along a world ray, as a ray parameter.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(origin, dir))
            .min_by(f64::total_cmp)
    }

    /// Distance from `p` to the nearest primitive surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|q| q.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Exact depth seen by a camera at `pose` (camera→world).
    pub fn render_exact(&self, pose: &Pose) -> DepthMap {
        let k = self.intrinsics;
        let origin = *pose.translation();
        let values: Vec<Option<f64>> = (0..k.pixel_count())
            .into_par_iter()
            .map(|i| {
                let (u, v) = (i % k.width, i / k.width);
                // unit depth along the ray, so the hit parameter is the depth
                let dir = pose.transform_vector(&k.backproject(u as f64, v as f64, 1.0));
                self.cast(&origin, &dir)
            })
            .collect();
        DepthMap::from_fn(k, |u, v| values[v * k.width + u])
    }

    /// Depth maps of every ring camera at one trajectory position, with
    /// noise, plus the frame's ground-truth world←rig pose.
    pub fn render(&self, frame: usize) -> Result<(Vec<DepthMap>, Pose)> {
        let rig_pose = *self.trajectory.get(frame).ok_or(Error::IndexOutOfRange {
            index: frame,
            len: self.trajectory.len(),
        })?;
        let maps = self
            .rig
            .cameras()
            .iter()
            .enumerate()
            .map(|(cam, extrinsic)| {
                let exact = self.render_exact(&rig_pose.compose(extrinsic));
                self.add_noise(&exact, frame, cam)
            })
            .collect();
        Ok((maps, rig_pose))
    }

    fn add_noise(&self, d: &DepthMap, frame: usize, cam: usize) -> DepthMap {
        if self.noise.depth_sigma == 0.0 && self.noise.dropout == 0.0 {
            return d.clone();
        }
        let seed = self.noise.seed ^ ((frame as u64) << 20) ^ ((cam as u64) << 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, self.noise.depth_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        DepthMap::from_fn(*d.intrinsics(), |u, v| {
            let drop = rng.random::<f64>() < self.noise.dropout;
            let n = normal.sample(&mut rng);
            let z = d.get(u, v)?;
            if drop {
                return None;
            }
            Some(if self.noise.depth_sigma > 0.0 { z + n } else { z }).filter(|z| *z > 0.0)
        })
    }

    /// Points sampled on the visible-from-anywhere scene surfaces at roughly
    /// `spacing` meters, for nearest-neighbour evaluation.
    pub fn surface_samples(&self, spacing: f64) -> PointCloud {
        let mut pts = Vec::new();
        let grid = |n: f64| ((n / spacing).ceil() as usize).max(1);
        for prim in &self.primitives {
            match prim {
                Primitive::Plane { pose, half_extent } => {
                    let (nx, ny) = (grid(2.0 * half_extent[0]), grid(2.0 * half_extent[1]));
                    for i in 0..=nx {
                        for j in 0..=ny {
                            let x = -half_extent[0] + 2.0 * half_extent[0] * i as f64 / nx as f64;
                            let y = -half_extent[1] + 2.0 * half_extent[1] * j as f64 / ny as f64;
                            pts.push(pose.transform_point(&Vector3::new(x, y, 0.0)));
                        }
                    }
                }
                Primitive::Cuboid { pose, half_size } => {
                    for axis in 0..3 {
                        for sign in [-1.0, 1.0] {
                            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                            let (na, nb) = (grid(2.0 * half_size[a]), grid(2.0 * half_size[b]));
                            for i in 0..=na {
                                for j in 0..=nb {
                                    let mut q = Vector3::zeros();
                                    q[axis] = sign * half_size[axis];
                                    q[a] = -half_size[a] + 2.0 * half_size[a] * i as f64 / na as f64;
                                    q[b] = -half_size[b] + 2.0 * half_size[b] * j as f64 / nb as f64;
                                    pts.push(pose.transform_point(&q));
                                }
                            }
                        }
                    }
                }
                Primitive::Sphere { center, radius } => {
                    let n = grid(std::f64::consts::PI * radius);
                    for i in 0..=n {
                        let theta = std::f64::consts::PI * i as f64 / n as f64;
                        let m = ((2.0 * n as f64 * theta.sin()).ceil() as usize).max(1);
                        for j in 0..m {
                            let phi = std::f64::consts::TAU * j as f64 / m as f64;
                            pts.push(center + *radius * Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
                        }
                    }
                }
                Primitive::Cylinder { pose, radius, half_height } => {
                    let m = grid(std::f64::consts::TAU * radius);
                    let nz = grid(2.0 * half_height);
                    for j in 0..m {
                        let phi = std::f64::consts::TAU * j as f64 / m as f64;
                        for i in 0..=nz {
                            let z = -half_height + 2.0 * half_height * i as f64 / nz as f64;
                            pts.push(pose.transform_point(&Vector3::new(radius * phi.cos(), radius * phi.sin(), z)));
                        }
                    }
                    for cap in [-half_height, *half_height] {
                        let nr = grid(*radius);
                        for i in 0..=nr {
                            let r = radius * i as f64 / nr as f64;
                            let mm = ((std::f64::consts::TAU * r / spacing).ceil() as usize).max(1);
                            for j in 0..mm {
                                let phi = std::f64::consts::TAU * j as f64 / mm as f64;
                                pts.push(pose.transform_point(&Vector3::new(r * phi.cos(), r * phi.sin(), cap)));
                            }
                        }
                    }
                }
            }
        }
        PointCloud::new(pts, "world", ViewKind::Full)
    }
}

/// Free-function form of [`SyntheticScene::render`].
pub fn synth_render(scene: &SyntheticScene, frame: usize) -> Result<(Vec<DepthMap>, Pose)> {
    scene.render(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::backproject;

    fn small(noise: NoiseModel) -> GardenParams {
        GardenParams {
            frames: 3,
            width: 64,
            height: 48,
            noise,
            ..Default::default()
        }
    }

    #[test]
    fn plane_straight_ahead() {
        let k = CameraIntrinsics::from_hfov(33, 25, 60.0, 0.1).unwrap();
        let wall = Primitive::Plane {
            pose: Pose::from_translation(Vector3::new(0.0, 0.0, 5.0)),
            half_extent: [100.0, 100.0],
        };
        let scene = SyntheticScene::new(
            vec![wall],
            vec![Pose::identity()],
            RingExtrinsics::ring(1, 0.0).unwrap(),
            k,
            NoiseModel { depth_sigma: 0.0, dropout: 0.0, seed: 0 },
        )
        .unwrap();
        let (maps, _) = scene.render(0).unwrap();
        assert_eq!(maps[0].get(16, 12), Some(5.0));
        // every pixel sees the wall at depth 5 (depth, not range)
        assert!(maps[0].values().iter().all(|z| (z - 5.0).abs() < 1e-12));
    }

    #[test]
    fn empty_scene_is_all_invalid() {
        let p = small(NoiseModel::default());
        let g = SyntheticScene::garden(&p).unwrap();
        let scene = SyntheticScene { primitives: Vec::new(), ..g };
        let (maps, _) = scene.render(1).unwrap();
        assert_eq!(maps.len(), 5);
        assert!(maps.iter().all(|m| m.valid_count() == 0));
        assert!(matches!(scene.render(3), Err(Error::IndexOutOfRange { index: 3, len: 3 })));
    }

    #[test]
    fn rendering_is_deterministic() {
        for noise in [NoiseModel { depth_sigma: 0.0, dropout: 0.0, seed: 0 }, NoiseModel::default()] {
            let s = SyntheticScene::garden(&small(noise)).unwrap();
            assert_eq!(s.render(2).unwrap(), s.render(2).unwrap());
        }
    }

    #[test]
    fn noiseless_points_lie_on_surfaces() {
        let s = SyntheticScene::garden(&small(NoiseModel { depth_sigma: 0.0, dropout: 0.0, seed: 0 })).unwrap();
        let (maps, rig_pose) = s.render(0).unwrap();
        for (k, m) in maps.iter().enumerate() {
            let pose = rig_pose.compose(s.rig.camera(k));
            let c = backproject(m);
            assert!(c.len() > 500);
            for p in &c.points {
                assert!(s.surface_distance(&pose.transform_point(p)) < 1e-6);
            }
        }
    }

    #[test]
    fn primitive_distances() {
        let sphere = Primitive::Sphere { center: Vector3::zeros(), radius: 1.0 };
        assert!((sphere.surface_distance(&Vector3::new(0.0, 0.0, 3.0)) - 2.0).abs() < 1e-12);
        let cube = Primitive::Cuboid { pose: Pose::identity(), half_size: [1.0, 1.0, 1.0] };
        assert!((cube.surface_distance(&Vector3::new(0.5, 0.0, 0.0)) - 0.5).abs() < 1e-12);
        assert!((cube.surface_distance(&Vector3::new(2.0, 2.0, 0.0)) - 2f64.sqrt()).abs() < 1e-12);
        let cyl = Primitive::Cylinder { pose: Pose::identity(), radius: 1.0, half_height: 1.0 };
        assert!((cyl.surface_distance(&Vector3::new(0.0, 0.0, 0.2)) - 0.8).abs() < 1e-12);
        assert!((cyl.surface_distance(&Vector3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-12);
        let dir = Vector3::new(-1.0, 0.0, 0.0);
        assert!((cyl.intersect(&Vector3::new(5.0, 0.0, 0.0), &dir).unwrap() - 4.0).abs() < 1e-12);
        assert!((cube.intersect(&Vector3::new(5.0, 0.0, 0.0), &dir).unwrap() - 4.0).abs() < 1e-12);
        assert!((sphere.intersect(&Vector3::new(5.0, 0.0, 0.0), &dir).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn surface_samples_are_on_surfaces() {
        let s = SyntheticScene::garden(&small(NoiseModel::default())).unwrap();
        let c = s.surface_samples(0.1);
        assert!(c.len() > 10_000);
        assert!(c.points.iter().all(|p| s.surface_distance(p) < 1e-9));
    }
}

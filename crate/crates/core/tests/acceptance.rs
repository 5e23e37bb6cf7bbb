//! Acceptance checks, one line per criterion. Runs sequentially without the
//! libtest harness so wall-clock budgets are measured on an idle process.

use std::io::Write;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use panorecon::depth::{
    backproject, depth_to_disparity, disparity_to_depth, map_tanh_output, project, remove_outliers, DepthMap,
    DisparityMap, FusionParams, TanhMapping,
};
use panorecon::geometry::{CameraIntrinsics, PointCloud, Pose, Vec6Pose};
use panorecon::pipeline::{align_first, eval_badx, eval_trajectory, run_full, PipelineConfig};
use panorecon::posegraph::{edge_action, graph_loss_with, optimize_edges, EdgeAction, EdgeSource, GraphEdge, RefineParams};
use panorecon::registration::{
    estimate_normals, global_register, icp_refine, overlap_percentage, GlobalRegParams, IcpParams,
};
use panorecon::volume::{extract_mesh, Allocation, IntegrationParams, TsdfVolume};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_budget(start: Instant, budget: f64, detail: String) -> Outcome {
    let s = start.elapsed().as_secs_f64();
    check(s < budget, format!("{detail}; {s:.2} s of {budget} s"))
}

fn random_pose(rng: &mut impl Rng, max_angle: f64, max_shift: f64) -> Pose {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(-max_angle..max_angle);
    let shift = Vector3::new(
        rng.random_range(-max_shift..max_shift),
        rng.random_range(-max_shift..max_shift),
        rng.random_range(-max_shift..max_shift),
    );
    Pose::from_axis_angle(&axis, angle, shift)
}

fn edge(i: usize, j: usize, t: Pose) -> GraphEdge {
    GraphEdge::new(i, j, t, 1.0, EdgeSource::Stage1).unwrap()
}

/// World←node poses on a closed loop of radius 5 with a little roll and pitch.
fn loop_truth(n: usize) -> Vec<Pose> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let r = Pose::from_rotation_vector(&Vector3::new(0.05 * (3.0 * a).sin(), 0.04 * a.cos(), a), Vector3::zeros());
            Pose::new(*r.rotation(), Vector3::new(5.0 * a.cos(), 5.0 * a.sin(), 0.3 * (2.0 * a).sin()))
        })
        .collect()
}

/// `T_ij = gt_i^-1 gt_j`, the measurement an exact sensor would report.
fn relative(gt: &[Pose], i: usize, j: usize) -> Pose {
    gt[i].inverse().compose(&gt[j])
}

fn world_from_variables(p: &[Pose]) -> Vec<Pose> {
    p.iter().map(Pose::inverse).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=15);
        let mut pairs = Vec::new();
        for j in 1..n {
            pairs.push((rng.random_range(0..j), j));
        }
        for _ in 0..rng.random_range(0..2 * n) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a != b {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        let edges: Vec<GraphEdge> = pairs.iter().map(|&(i, j)| edge(i, j, random_pose(&mut rng, 3.0, 4.0))).collect();
        let p: Vec<Pose> = (0..n).map(|_| random_pose(&mut rng, 3.0, 4.0)).collect();
        let loss = graph_loss_with(&edges, &p);
        let mut trace_sum = 0.0;
        let mut translation = 0.0;
        for e in &edges {
            let r_pred: Matrix3<f64> = p[e.i].rotation() * p[e.j].rotation().transpose();
            let t_pred = p[e.i].translation() - r_pred * p[e.j].translation();
            trace_sum += (e.transform.rotation().transpose() * r_pred).trace();
            translation += (e.transform.translation() - t_pred).norm_squared();
        }
        let closed = 6.0 * edges.len() as f64 - 2.0 * trace_sum + translation;
        worst = worst.max((loss - closed).abs());
    }
    if worst >= 1e-9 {
        return Err(format!("max |loss - closed form| = {worst:.3e}"));
    }
    within_budget(start, 5.0, format!("200 graphs, max |loss - closed form| = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let n = 20;
    let gt = loop_truth(n);
    let edges: Vec<GraphEdge> = (0..n).map(|k| edge(k, (k + 1) % n, relative(&gt, k, (k + 1) % n))).collect();
    let p = optimize_edges(n, &edges).map_err(|e| e.to_string())?;
    let loss = graph_loss_with(&edges, &p);
    let est = align_first(&world_from_variables(&p), &gt);
    let (mut dt, mut dr) = (0.0f64, 0.0f64);
    for (e, g) in est.iter().zip(&gt) {
        dt = dt.max((e.translation() - g.translation()).norm());
        dr = dr.max(g.inverse().compose(e).angle().to_degrees());
    }
    let detail = format!("max error {dt:.2e} m / {dr:.2e} deg, loss {loss:.2e}");
    if !(dt < 1e-6 && dr < 1e-5 && loss < 1e-9) {
        return Err(detail);
    }
    within_budget(start, 2.0, detail)
}

fn noisy(t: &Pose, rng: &mut ChaCha8Rng, sigma_deg: f64, sigma_t: f64) -> Pose {
    let nr = Normal::new(0.0, sigma_deg.to_radians()).unwrap();
    let nt = Normal::new(0.0, sigma_t).unwrap();
    let w = Vector3::new(nr.sample(rng), nr.sample(rng), nr.sample(rng));
    let d = Vector3::new(nt.sample(rng), nt.sample(rng), nt.sample(rng));
    Pose::from_rotation_vector(&w, d).compose(t)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let n = 20;
    let gt = loop_truth(n);
    let seeds = 20;
    let (mut opt_sum, mut chain_sum, mut wins) = (0.0, 0.0, 0);
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push(edge(i, j, noisy(&relative(&gt, i, j), &mut rng, 2.0, 0.05)));
            }
        }
        let mut chain = vec![Pose::identity()];
        for k in 0..n - 1 {
            let step = edges.iter().find(|e| e.i == k && e.j == k + 1).unwrap().transform;
            chain.push(chain[k].compose(&step));
        }
        let p = optimize_edges(n, &edges).map_err(|e| e.to_string())?;
        let opt = eval_trajectory(&world_from_variables(&p), &gt).map_err(|e| e.to_string())?.e_t_stats().0;
        let seq = eval_trajectory(&chain, &gt).map_err(|e| e.to_string())?.e_t_stats().0;
        opt_sum += opt;
        chain_sum += seq;
        if opt <= 0.5 * seq {
            wins += 1;
        }
    }
    let (opt, seq) = (opt_sum / seeds as f64, chain_sum / seeds as f64);
    let detail = format!(
        "mean E_t optimized {opt:.4} m vs chained {seq:.4} m (ratio {:.3}), {wins}/{seeds} seeds at or below half",
        opt / seq
    );
    if opt > 0.5 * seq {
        return Err(detail);
    }
    within_budget(start, 30.0, detail)
}

fn grid_cloud(count: usize, origin: Vector3<f64>) -> Vec<Vector3<f64>> {
    (0..count).map(|k| origin + Vector3::new((k % 10) as f64 * 0.1, (k / 10) as f64 * 0.1, 0.0)).collect()
}

fn criterion_4() -> Outcome {
    let params = RefineParams::default();
    if params.ol_min != 0.33 || params.ol_max != 0.35 || params.v_th != Vec6Pose::new(0.4, 0.4, 0.4, 15.0, 15.0, 15.0) {
        return Err(format!("unexpected defaults {params:?}"));
    }
    let predicted = Pose::from_vec6(&Vec6Pose::new(0.8, -0.2, 1.5, 3.0, -20.0, 40.0));
    let local = predicted.compose(&Pose::from_vec6(&Vec6Pose::new(0.1, 0.05, -0.1, 2.0, 1.0, -4.0)));
    let mut seen = Vec::new();
    for (hits, expected) in [(20, EdgeAction::Prune), (34, EdgeAction::Keep), (50, EdgeAction::Replace)] {
        // 100-point source of which `hits` points coincide with the target
        let source = PointCloud::from_points(grid_cloud(100, Vector3::zeros()));
        let mut target = grid_cloud(hits, Vector3::zeros());
        target.extend(grid_cloud(200 - hits, Vector3::new(50.0, 0.0, 0.0)));
        let target = PointCloud::from_points(target);
        let beta = overlap_percentage(&source, &target, &Pose::identity(), 0.05).map_err(|e| e.to_string())?;
        let action = edge_action(beta, &predicted, &local, &params);
        seen.push(format!("{beta:.2}->{action:?}"));
        if beta != hits as f64 / 100.0 || action != expected {
            return Err(format!("beta {beta} gave {action:?}, expected {expected:?}"));
        }
    }
    // outside v_th the edge is kept even at high overlap
    let far = Pose::from_translation(Vector3::new(0.5, 0.0, 0.0)).compose(&predicted);
    if edge_action(0.5, &predicted, &far, &params) != EdgeAction::Keep {
        return Err("edge outside v_th was not kept".into());
    }
    Ok(seen.join(", "))
}

fn wavy(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            Vector3::new(x, y, 2.0 + 0.3 * (2.5 * x).sin() + 0.25 * (3.0 * y).cos() + 0.1 * x * y)
        })
        .collect();
    PointCloud::from_points(pts)
}

/// Floor, two walls, a box, a ball and a column sampled at `density` points
/// per square meter.
fn room(density: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    let mut patch = |area: f64, f: &dyn Fn(f64, f64) -> Vector3<f64>| {
        for _ in 0..(area * density) as usize {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            pts.push(f(a, b));
        }
    };
    patch(12.0, &|a, b| Vector3::new(4.0 * a, 3.0 * b, 0.0));
    patch(10.0, &|a, b| Vector3::new(4.0 * a, 0.0, 2.5 * b));
    patch(7.5, &|a, b| Vector3::new(0.0, 3.0 * a, 2.5 * b));
    patch(0.42, &|a, b| Vector3::new(1.0 + 0.6 * a, 1.5 + 0.7 * b, 0.8));
    patch(0.48, &|a, b| Vector3::new(1.0 + 0.6 * a, 1.5, 0.8 * b));
    patch(0.56, &|a, b| Vector3::new(1.6, 1.5 + 0.7 * a, 0.8 * b));
    patch(2.0, &|a, b| {
        let z = 2.0 * a - 1.0;
        let phi = std::f64::consts::TAU * b;
        let r = (1.0 - z * z).sqrt();
        Vector3::new(2.8, 0.9, 0.5) + 0.4 * Vector3::new(r * phi.cos(), r * phi.sin(), z)
    });
    patch(1.9, &|a, b| {
        let phi = std::f64::consts::TAU * a;
        Vector3::new(3.2 + 0.15 * phi.cos(), 2.3 + 0.15 * phi.sin(), 2.0 * b)
    });
    PointCloud::from_points(pts)
}

fn pose_gap(a: &Pose, b: &Pose) -> (f64, f64) {
    ((a.translation() - b.translation()).norm(), a.inverse().compose(b).angle().to_degrees())
}

fn criterion_5() -> Outcome {
    let icp = IcpParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_t, mut worst_r) = (0.0f64, 0.0f64);
    for seed in 0..5 {
        let source = wavy(1000, seed);
        let angle = rng.random_range(2.0..10.0f64).to_radians();
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let truth = Pose::from_axis_angle(&axis, angle, 0.2 * rng.random::<f64>() * dir.normalize());
        let target = estimate_normals(&source.transformed(&truth, "target"), 0.25);
        let r = icp_refine(&source, &target, &Pose::identity(), &icp).map_err(|e| e.to_string())?;
        let (dt, dr) = pose_gap(&truth, &r.transform);
        worst_t = worst_t.max(dt);
        worst_r = worst_r.max(dr);
    }
    if !(worst_t < 1e-3 && worst_r < 0.1) {
        return Err(format!("ICP error {worst_t:.2e} m / {worst_r:.3} deg"));
    }

    let source = room(1500.0, 2);
    let truth = Pose::new(*Pose::from_axis_angle(&Vector3::z(), 120f64.to_radians(), Vector3::zeros()).rotation(), Vector3::new(1.0, 0.0, 0.0));
    let target = source.transformed(&truth, "target");
    let coarse = global_register(&source, &target, &GlobalRegParams::default()).map_err(|e| e.to_string())?;
    let target = estimate_normals(&target, 0.1);
    let fine = icp_refine(&source, &target, &coarse.transform, &icp).map_err(|e| e.to_string())?;
    let (gt_t, gt_r) = pose_gap(&truth, &fine.transform);
    if !(gt_t < 1e-3 && gt_r < 0.1) {
        return Err(format!("global + ICP error {gt_t:.2e} m / {gt_r:.3} deg"));
    }

    // moving the source by G turns the answer T into T G^-1; moving the target
    // by G turns it into G T
    let source = wavy(1000, 9);
    let truth = Pose::from_axis_angle(&Vector3::new(0.3, -1.0, 0.2), 6f64.to_radians(), Vector3::new(0.1, 0.05, -0.08));
    let target = estimate_normals(&source.transformed(&truth, "target"), 0.25);
    let base = icp_refine(&source, &target, &Pose::identity(), &icp).map_err(|e| e.to_string())?.transform;
    let mut worst_eq = 0.0f64;
    for _ in 0..5 {
        let g = random_pose(&mut rng, 3.0, 2.0);
        let moved_src = source.transformed(&g, "moved");
        let a = icp_refine(&moved_src, &target, &g.inverse(), &icp).map_err(|e| e.to_string())?.transform;
        let expect_a = base.compose(&g.inverse());
        let moved_tgt = target.transformed(&g, "moved");
        let b = icp_refine(&source, &moved_tgt, &g, &icp).map_err(|e| e.to_string())?.transform;
        let expect_b = g.compose(&base);
        for (x, y) in [(a, expect_a), (b, expect_b)] {
            worst_eq = worst_eq.max((x.to_matrix() - y.to_matrix()).abs().max());
        }
    }
    check(
        worst_eq < 1e-6,
        format!(
            "ICP {worst_t:.1e} m / {worst_r:.1e} deg; global+ICP at 120 deg + 1 m {gt_t:.1e} m / {gt_r:.1e} deg; equivariance gap {worst_eq:.1e}"
        ),
    )
}

fn brute_overlap(a: &PointCloud, b: &PointCloud, t: &Pose, thr: f64) -> f64 {
    let moved: Vec<Vector3<f64>> = a.points.iter().map(|p| t.transform_point(p)).collect();
    let covered = |from: &[Vector3<f64>], to: &[Vector3<f64>]| {
        from.iter().filter(|p| to.iter().any(|q| (*p - q).norm_squared() <= thr * thr)).count() as f64 / from.len() as f64
    };
    let beta_a = covered(&moved, &b.points);
    let beta_b = covered(&b.points, &moved);
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => beta_a,
        std::cmp::Ordering::Greater => beta_b,
        std::cmp::Ordering::Equal => beta_a.min(beta_b),
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cloud = |n: usize, rng: &mut ChaCha8Rng| {
        PointCloud::from_points((0..n).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect())
    };
    let mut cases = 0;
    for (na, nb) in [(200, 200), (150, 200), (200, 150), (200, 120)] {
        for _ in 0..10 {
            let a = cloud(na, &mut rng);
            let b = cloud(nb, &mut rng);
            let t = random_pose(&mut rng, 0.2, 0.1);
            let thr = rng.random_range(0.03..0.15);
            let fast = overlap_percentage(&a, &b, &t, thr).map_err(|e| e.to_string())?;
            let slow = brute_overlap(&a, &b, &t, thr);
            if fast != slow {
                return Err(format!("{na} vs {nb} points: {fast} != oracle {slow}"));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} cloud pairs equal to the pair-count oracle, both size orders and ties"))
}

/// Depth of the first hit of the camera ray through `(u, v)` with a sphere.
fn sphere_depth(k: &CameraIntrinsics, pose: &Pose, u: usize, v: usize, c: &Vector3<f64>, r: f64) -> Option<f64> {
    let dir = pose.transform_vector(&k.backproject(u as f64, v as f64, 1.0));
    let o = pose.translation() - c;
    let (a, b, cc) = (dir.dot(&dir), 2.0 * o.dot(&dir), o.dot(&o) - r * r);
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let s = (-b - disc.sqrt()) / (2.0 * a);
    (s > 0.0).then_some(s)
}

/// Camera→world pose at `eye` whose optical axis points at `target`.
fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let helper = if z.z.abs() > 0.9 { Vector3::x() } else { Vector3::z() };
    let x = helper.cross(&z).normalize();
    let y = z.cross(&x);
    Pose::new(Matrix3::from_columns(&[x, y, z]), eye)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let k = CameraIntrinsics::from_hfov(320, 240, 60.0, 0.1).map_err(|e| e.to_string())?;
    let params = IntegrationParams { truncation: 0.06, ..Default::default() };
    let (c, r) = (Vector3::new(0.2, -0.1, 0.3), 0.5);
    let mut vol = TsdfVolume::covering(c.add_scalar(-0.7), c.add_scalar(0.7), 0.01, 0.06, Allocation::Sparse)
        .map_err(|e| e.to_string())?;
    let mut eyes = Vec::new();
    for k in 0..8 {
        let a = std::f64::consts::TAU * k as f64 / 8.0;
        eyes.push(c + 1.6 * Vector3::new(a.cos(), a.sin(), 0.0));
        eyes.push(c + 1.6 * Vector3::new(0.7 * a.cos(), 0.7 * a.sin(), if k % 2 == 0 { 0.714 } else { -0.714 }));
    }
    for eye in eyes {
        let pose = look_at(eye, c);
        let d = DepthMap::from_fn(k, |u, v| sphere_depth(&k, &pose, u, v, &c, r));
        vol.integrate(&d, &pose, &params).map_err(|e| e.to_string())?;
    }
    let mesh = extract_mesh(&vol).map_err(|e| e.to_string())?;
    let sphere_err = mesh.vertices.iter().map(|v| ((v - c).norm() - r).abs()).sum::<f64>() / mesh.vertices.len() as f64;

    // one view of a tilted plane n.x = 2
    let n = Vector3::new(0.15, -0.1, 1.0).normalize();
    let pose = Pose::identity();
    let plane = DepthMap::from_fn(k, |u, v| {
        let dir = k.backproject(u as f64, v as f64, 1.0);
        Some(2.0 / n.dot(&dir))
    });
    let mut vol = TsdfVolume::covering(Vector3::new(-1.0, -0.8, 1.6), Vector3::new(1.0, 0.8, 2.6), 0.01, 0.06, Allocation::Sparse)
        .map_err(|e| e.to_string())?;
    vol.integrate(&plane, &pose, &params).map_err(|e| e.to_string())?;
    let mesh_p = extract_mesh(&vol).map_err(|e| e.to_string())?;
    let plane_rms = (mesh_p.vertices.iter().map(|v| (n.dot(v) - 2.0).powi(2)).sum::<f64>() / mesh_p.vertices.len() as f64).sqrt();
    let detail = format!(
        "sphere mean |d - r| {sphere_err:.4} m over {} vertices, plane RMS {plane_rms:.4} m over {} vertices",
        mesh.vertices.len(),
        mesh_p.vertices.len()
    );
    if mesh.vertices.is_empty() || mesh_p.vertices.is_empty() || !(sphere_err < 0.01 && plane_rms < 0.005) {
        return Err(detail);
    }
    within_budget(start, 10.0, detail)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (fb, max_dist, max_disp) = (221.0 * 0.1, 5.0, 192.0);
    let distance = TanhMapping::MaxDistance { max_dist };
    let disparity = TanhMapping::MaxDisparity { max_disp };
    let (mut lo, mut hi, mut violations) = (f64::INFINITY, 0.0f64, 0usize);
    let ws: Vec<f64> = (0..1_000_000).map(|_| 1.0 - 2.0 * rng.random::<f64>()).collect();
    for &w in &ws {
        let z = distance.implied_depth(w, fb);
        lo = lo.min(z);
        hi = hi.max(z);
        if disparity.implied_depth(w, fb) > max_dist {
            violations += 1;
        }
    }
    if !(lo > 0.0 && hi <= max_dist) {
        return Err(format!("max-distance depth range [{lo}, {hi}]"));
    }
    if violations == 0 {
        return Err("max-disparity mapping stayed within the depth bound".into());
    }
    // the mapped disparity grid agrees with the closed form
    let k = CameraIntrinsics::new(221.0, 221.0, 49.5, 49.5, 100, 100, 0.1).map_err(|e| e.to_string())?;
    let grid = &ws[..k.pixel_count()];
    let depth = disparity_to_depth(&map_tanh_output(grid, distance, &k).map_err(|e| e.to_string())?);
    let worst = depth
        .values()
        .iter()
        .zip(grid)
        .map(|(z, &w)| (z - distance.implied_depth(w, fb)).abs())
        .fold(0.0, f64::max);
    check(
        worst < 1e-9 && depth.valid_count() == k.pixel_count(),
        format!("max-distance depth in [{lo:.2e}, {hi:.4}] m; max-disparity exceeds {max_dist} m for {violations} of 1e6 draws; mapped grid error {worst:.1e}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_depth, mut worst_disp, mut worst_proj) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let (w, h) = (rng.random_range(20..80), rng.random_range(20..60));
        let f = rng.random_range(50.0..400.0);
        let k = CameraIntrinsics::new(f, f * rng.random_range(0.9..1.1), w as f64 / 2.0 - 0.3, h as f64 / 2.0 + 0.2, w, h, rng.random_range(0.05..0.3))
            .map_err(|e| e.to_string())?;
        let depths: Vec<f64> = (0..k.pixel_count()).map(|_| if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random_range(0.3..20.0) }).collect();
        let d = DepthMap::from_values(k, depths).map_err(|e| e.to_string())?;
        let back = disparity_to_depth(&depth_to_disparity(&d));
        if back.mask() != d.mask() {
            return Err("depth -> disparity -> depth changed the mask".into());
        }
        for (a, b) in back.values().iter().zip(d.values()) {
            worst_depth = worst_depth.max((a - b).abs());
        }
        let disps: Vec<f64> = (0..k.pixel_count()).map(|_| rng.random_range(0.5..150.0)).collect();
        let disp = DisparityMap::from_values(k, disps).map_err(|e| e.to_string())?;
        let again = depth_to_disparity(&disparity_to_depth(&disp));
        for (a, b) in again.values().iter().zip(disp.values()) {
            worst_disp = worst_disp.max((a - b).abs());
        }
        let reproj = project(&backproject(&d), &k);
        if reproj.mask() != d.mask() {
            return Err("backproject -> project changed the mask".into());
        }
        for (a, b) in reproj.values().iter().zip(d.values()) {
            worst_proj = worst_proj.max((a - b).abs());
        }
    }
    check(
        worst_depth < 1e-9 && worst_disp < 1e-9 && worst_proj < 1e-6,
        format!("depth round trip {worst_depth:.1e} m, disparity round trip {worst_disp:.1e} px, projection round trip {worst_proj:.1e} m"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = PipelineConfig::default();
    config.output.dir = dir.path().join("garden");
    let garden = &config.synthetic;
    if garden.frames != 12 || garden.noise.depth_sigma != 0.01 {
        return Err(format!("unexpected garden defaults: {} frames, sigma {}", garden.frames, garden.noise.depth_sigma));
    }
    let start = Instant::now();
    let out = run_full(&config).map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let mesh = out.report.analytic.map(|m| m.0).unwrap_or(f64::INFINITY);
    let e_t = out.report.trajectory.as_ref().map(|t| t.e_t_stats().0).unwrap_or(f64::INFINITY);
    check(
        mesh < 0.03 && e_t < 0.05 && seconds < 300.0,
        format!("mesh to scene {mesh:.4} m (< 0.03), E_t mean {e_t:.4} m (< 0.05), {seconds:.0} s (< 300)"),
    )
}

fn brute_outliers(points: &[Vector3<f64>], p: &FusionParams) -> Vec<Vector3<f64>> {
    let first: Vec<Vector3<f64>> = points
        .iter()
        .enumerate()
        .filter(|(i, a)| points.iter().enumerate().filter(|(j, b)| j != i && (*a - *b).norm() <= p.radius).count() >= p.min_neighbors)
        .map(|(_, a)| *a)
        .collect();
    if first.len() < 2 {
        return first;
    }
    let means: Vec<f64> = first
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut d: Vec<f64> = first.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, b)| (a - b).norm()).collect();
            d.sort_by(f64::total_cmp);
            d.truncate(p.k_neighbors);
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let std = (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    first.into_iter().zip(&means).filter(|(_, m)| **m <= mean + p.dist_ratio * std).map(|(a, _)| a).collect()
}

fn criterion_11() -> Outcome {
    let p = FusionParams::default();
    if p.min_neighbors != 20 || p.radius != 0.05 || p.k_neighbors != 20 || p.dist_ratio != 1.5 {
        return Err(format!("unexpected defaults {p:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut kept, mut total) = (0, 0);
    for trial in 0..30 {
        // a dense blob whose members sit near the neighbour-count threshold,
        // a looser satellite and scattered strays: 50 points in all
        let blob = 30 + trial % 8;
        let mut pts = Vec::new();
        for _ in 0..blob {
            let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            pts.push(0.04 * d);
        }
        for _ in 0..(45 - blob) {
            let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            pts.push(Vector3::new(0.3, 0.0, 0.0) + 0.06 * d);
        }
        for _ in 0..5 {
            pts.push(Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        let fast = remove_outliers(&PointCloud::from_points(pts.clone()), &p);
        let slow = brute_outliers(&pts, &p);
        if fast.points != slow {
            return Err(format!("trial {trial}: kept {} points, oracle kept {}", fast.len(), slow.len()));
        }
        kept += slow.len();
        total += pts.len();
    }
    Ok(format!("30 clouds of 50 points equal to the oracle ({kept} of {total} points kept)"))
}

fn criterion_12() -> Outcome {
    let k = CameraIntrinsics::new(2.0, 2.0, 1.0, 0.5, 2, 2, 0.1).map_err(|e| e.to_string())?;
    let gt = DepthMap::from_values(k, vec![1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    // errors 0.03, 0.05, 0.01, 0.1 m against a 0.025 m threshold
    let est = DepthMap::from_values(k, vec![1.03, 1.95, 3.01, 4.1]).map_err(|e| e.to_string())?;
    let fixture = eval_badx(&est, &gt, 1.0, 10.0).map_err(|e| e.to_string())?;
    if fixture != 0.75 {
        return Err(format!("fixture gave {fixture}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let k = CameraIntrinsics::new(50.0, 50.0, 20.0, 15.0, 40, 30, 0.1).map_err(|e| e.to_string())?;
    let xs = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 8.0];
    for _ in 0..100 {
        let g: Vec<f64> = (0..k.pixel_count()).map(|_| rng.random_range(0.5..6.0)).collect();
        let e: Vec<f64> = g.iter().map(|z| if rng.random::<f64>() < 0.05 { 0.0 } else { z + rng.random_range(-0.3..0.3) }).collect();
        let (g, e) = (DepthMap::from_values(k, g).unwrap(), DepthMap::from_values(k, e).unwrap());
        let values: Vec<f64> = xs.iter().map(|&x| eval_badx(&e, &g, x, 5.0).unwrap()).collect();
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("badX not monotone: {values:?}"));
        }
    }
    Ok("hand-counted fixture 0.75 at X=1; non-increasing in X on 100 random pairs".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("loss decomposition", criterion_1),
        ("exact recovery", criterion_2),
        ("noise reduction", criterion_3),
        ("edge decision table", criterion_4),
        ("registration", criterion_5),
        ("overlap oracle", criterion_6),
        ("tsdf and marching cubes", criterion_7),
        ("tanh value domain", criterion_8),
        ("depth round trips", criterion_9),
        ("end-to-end garden", criterion_10),
        ("outlier removal oracle", criterion_11),
        ("badX", criterion_12),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    let mut out = std::io::stdout();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let line = match &result {
            Ok(d) => format!("criterion {id:2} PASS  {name}: {d} [{secs:.2} s]"),
            Err(d) => format!("criterion {id:2} FAIL  {name}: {d} [{secs:.2} s]"),
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
        if result.is_err() {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        writeln!(out, "failed criteria: {failed:?}").unwrap();
        std::process::exit(1);
    }
}

//! Stage functions and the full pipeline: depth post-processing, pose
//! fusion, volumetric integration, meshing and evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::depth::{assemble_full_view, backproject, project, remove_outliers, FusionParams, OutlierScope, RingExtrinsics, RIG_FRAME};
use crate::error::{Error, Result, Stage, StageExt};
use crate::geometry::{CameraIntrinsics, PointCloud, Pose, TriangleMesh, ViewKind};
use crate::io;
use crate::pipeline::config::{PipelineConfig, VolumeConfig};
use crate::pipeline::dataset::{format_poses, load_dataset, read_poses, Dataset};
use crate::pipeline::eval::{eval_badx, eval_mesh, eval_trajectory, mean_std, EvalReport};
use crate::pipeline::scene::SyntheticScene;
use crate::posegraph::{mpteji_run, GraphNode, MptejiParams, MptejiRun};
use crate::volume::{extract_cloud, extract_mesh, TsdfVolume};

/// Cleaned clouds of one rig position.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameClouds {
    pub id: usize,
    /// One per camera, in that camera's frame.
    pub singles: Vec<PointCloud>,
    /// All cameras merged in the rig frame.
    pub full: PointCloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthStage {
    pub intrinsics: CameraIntrinsics,
    pub rig: RingExtrinsics,
    pub frames: Vec<FrameClouds>,
}

impl DepthStage {
    /// Graph nodes: the full-view cloud and camera `single_view_camera`'s
    /// cloud, both in the rig frame.
    pub fn nodes(&self, single_view_camera: usize) -> Result<Vec<GraphNode>> {
        if single_view_camera >= self.rig.len() {
            return Err(Error::IndexOutOfRange {
                index: single_view_camera,
                len: self.rig.len(),
            });
        }
        let extrinsic = self.rig.camera(single_view_camera);
        Ok(self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut single = f.singles[single_view_camera].transformed(extrinsic, RIG_FRAME);
                single.view = ViewKind::Single;
                GraphNode::new(i, f.full.clone(), single)
            })
            .collect())
    }
}

/// Clip, back-project, filter each view, assemble and filter the full view.
pub fn depth_stage(ds: &Dataset, fusion: &FusionParams) -> Result<DepthStage> {
    fusion.validate()?;
    ds.validate()?;
    let single_pass = matches!(fusion.scope, OutlierScope::Single | OutlierScope::Both);
    let full_pass = matches!(fusion.scope, OutlierScope::Full | OutlierScope::Both);
    let frames = ds
        .frames
        .iter()
        .map(|f| {
            let singles: Vec<PointCloud> = f
                .depth
                .par_iter()
                .map(|d| {
                    let c = backproject(&d.clipped(fusion.max_dist));
                    if single_pass { remove_outliers(&c, fusion) } else { c }
                })
                .collect();
            let full = assemble_full_view(&singles, &ds.rig)?;
            let full = if full_pass { remove_outliers(&full, fusion) } else { full };
            Ok(FrameClouds { id: f.id, singles, full })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthStage {
        intrinsics: ds.intrinsics,
        rig: ds.rig.clone(),
        frames,
    })
}

fn cloud_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("{id:04}"))
}

/// Writes the cleaned clouds plus the camera model they need downstream.
pub fn write_depth_stage(root: &Path, d: &DepthStage) -> Result<()> {
    std::fs::create_dir_all(root)?;
    io::write_json(&root.join("intrinsics.json"), &d.intrinsics)?;
    std::fs::write(root.join("rig.txt"), format_poses(d.rig.cameras()))?;
    for f in &d.frames {
        let dir = cloud_dir(root, f.id);
        std::fs::create_dir_all(&dir)?;
        io::write_ply_cloud(&dir.join("full.ply"), &f.full)?;
        for (k, c) in f.singles.iter().enumerate() {
            io::write_ply_cloud(&dir.join(format!("cam{k}.ply")), c)?;
        }
    }
    Ok(())
}

pub fn read_depth_stage(root: &Path) -> Result<DepthStage> {
    let layout = |p: &Path, r: String| Error::Layout { path: p.to_path_buf(), reason: r };
    let intr_path = root.join("intrinsics.json");
    let text = std::fs::read_to_string(&intr_path).map_err(|e| layout(&intr_path, e.to_string()))?;
    let intrinsics: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| layout(&intr_path, e.to_string()))?;
    let rig = RingExtrinsics::new(read_poses(&root.join("rig.txt"))?)?;
    let mut ids: Vec<usize> = std::fs::read_dir(root)
        .map_err(|e| layout(root, e.to_string()))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_string_lossy().parse().ok())
        .collect();
    ids.sort_unstable();
    if ids.is_empty() {
        return Err(layout(root, "no frame directories".into()));
    }
    let frames = ids
        .into_iter()
        .map(|id| {
            let dir = cloud_dir(root, id);
            let mut full = io::read_ply_cloud(&dir.join("full.ply"))?;
            full.frame = RIG_FRAME.into();
            full.view = ViewKind::Full;
            let singles = (0..rig.len())
                .map(|k| {
                    let mut c = io::read_ply_cloud(&dir.join(format!("cam{k}.ply")))?;
                    c.frame = crate::depth::projection::CAMERA_FRAME.into();
                    c.view = ViewKind::Single;
                    Ok(c)
                })
                .collect::<Result<_>>()?;
            Ok(FrameClouds { id, singles, full })
        })
        .collect::<Result<_>>()?;
    Ok(DepthStage { intrinsics, rig, frames })
}

/// Both pose-graph stages over the depth stage's clouds.
pub fn pose_stage(d: &DepthStage, single_view_camera: usize, params: &MptejiParams) -> Result<MptejiRun> {
    mpteji_run(d.nodes(single_view_camera)?, params)
}

/// Projects every camera's cleaned cloud back into its image plane and fuses
/// it from world←rig `poses[i]` composed with the camera extrinsic.
pub fn integrate_stage(d: &DepthStage, poses: &[Pose], vc: &VolumeConfig) -> Result<TsdfVolume> {
    if poses.len() != d.frames.len() {
        return Err(Error::LengthMismatch {
            left: poses.len(),
            right: d.frames.len(),
        });
    }
    vc.params.validate(vc.voxel_size)?;
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for (f, w) in d.frames.iter().zip(poses) {
        for (k, c) in f.singles.iter().enumerate() {
            let pose = w.compose(d.rig.camera(k));
            for p in c.points.iter().filter(|p| p.z <= vc.params.max_depth) {
                let q = pose.transform_point(p);
                lo = lo.inf(&q);
                hi = hi.sup(&q);
            }
        }
    }
    if !lo.iter().all(|x| x.is_finite()) {
        return Err(Error::EmptyCloud);
    }
    let pad = Vector3::repeat(vc.params.truncation + 2.0 * vc.voxel_size);
    let mut vol = TsdfVolume::covering(lo - pad, hi + pad, vc.voxel_size, vc.params.truncation, vc.allocation)?;
    for (f, w) in d.frames.iter().zip(poses) {
        for (k, c) in f.singles.iter().enumerate() {
            let depth = project(c, &d.intrinsics);
            vol.integrate(&depth, &w.compose(d.rig.camera(k)), &vc.params)?;
        }
    }
    Ok(vol)
}

/// Where the ground truth for evaluation comes from.
#[derive(Debug, Clone)]
pub enum Reference {
    None,
    /// Analytic scene, available when the input was rendered in memory.
    Scene(Box<SyntheticScene>),
    Cloud(PointCloud),
}

/// Everything a full run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub mesh: TriangleMesh,
    /// World←rig, first pose at the identity.
    pub trajectory: Vec<Pose>,
    pub stage1_trajectory: Vec<Pose>,
    pub report: EvalReport,
    pub output_dir: PathBuf,
}

/// Loads the configured input, applying camera overrides.
pub fn ingest(config: &PipelineConfig) -> Result<(Dataset, Reference)> {
    let (mut ds, reference) = match &config.input.path {
        Some(path) => {
            let ds = load_dataset(path, config.input.adapter)?;
            let reference = match config.eval.reference.clone().or_else(|| Some(path.join("reference.ply")).filter(|p| p.is_file())) {
                Some(p) => Reference::Cloud(io::read_ply_cloud(&p)?),
                None => Reference::None,
            };
            (ds, reference)
        }
        None => {
            let scene = SyntheticScene::garden(&config.synthetic)?;
            (Dataset::from_scene(&scene, true)?, Reference::Scene(Box::new(scene)))
        }
    };
    if let Some(k) = config.camera.intrinsics {
        if ds.frames.iter().flat_map(|f| &f.depth).any(|m| !m.same_shape(&k)) {
            return Err(Error::Config("camera.intrinsics does not match the image size".into()));
        }
        ds.intrinsics = k;
        for f in &mut ds.frames {
            for m in &mut f.depth {
                *m = crate::depth::DepthMap::new(k, m.values().to_vec(), m.mask().to_vec())?;
            }
        }
    }
    if let Some((n, r)) = config.camera.ring {
        ds.rig = RingExtrinsics::ring(n, r)?;
    }
    ds.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok((ds, reference))
}

fn timed<T>(report: &mut EvalReport, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().stage(stage);
    let secs = start.elapsed().as_secs_f64();
    info!("{stage} stage: {secs:.2} s");
    report.timing(&stage.to_string(), secs);
    out
}

/// Accuracy figures against whatever reference is available.
pub fn evaluate(
    report: &mut EvalReport,
    config: &PipelineConfig,
    ds: &Dataset,
    depth: &DepthStage,
    trajectory: &[Pose],
    mesh: &TriangleMesh,
    reference: &Reference,
) -> Result<()> {
    let gt = ds.ground_truth();
    if let Some(gt) = &gt {
        report.trajectory = Some(eval_trajectory(trajectory, gt)?);
    }
    // mesh vertices in the ground-truth world frame
    let to_gt = match &gt {
        Some(g) => g[0].compose(&trajectory[0].inverse()),
        None => Pose::identity(),
    };
    let recon = extract_cloud(mesh).transformed(&to_gt, "world");
    match reference {
        Reference::None => {}
        Reference::Cloud(c) => report.mesh = Some(eval_mesh(&recon, c)?),
        Reference::Scene(scene) => {
            let d: Vec<f64> = recon.points.par_iter().map(|p| scene.surface_distance(p)).collect();
            let (mean, std) = mean_std(&d);
            report.analytic = Some((mean, std));
            report.mesh = Some(eval_mesh(&recon, &scene.surface_samples(config.eval.surface_spacing))?);
            if !config.eval.badx.is_empty() {
                let gt = gt.as_deref().unwrap_or(&scene.trajectory);
                let pairs: Vec<(crate::depth::DepthMap, crate::depth::DepthMap)> = depth
                    .frames
                    .iter()
                    .enumerate()
                    .flat_map(|(i, f)| f.singles.iter().enumerate().map(move |(k, c)| (i, k, c)))
                    .map(|(i, k, c)| {
                        let exact = scene.render_exact(&gt[i].compose(depth.rig.camera(k)));
                        (project(c, &depth.intrinsics), exact)
                    })
                    .collect();
                for &x in &config.eval.badx {
                    let mut bad = 0.0;
                    for (est, exact) in &pairs {
                        bad += eval_badx(est, exact, x, config.fusion.max_dist)?;
                    }
                    report.badx.push((x, bad / pairs.len() as f64));
                }
            }
        }
    }
    Ok(())
}

/// Runs every stage and writes `trajectory.txt`, `graph.txt`, `mesh.ply`,
/// `mesh.obj` and `report.json` to the output directory. Nothing is written
/// when configuration or input loading fails.
pub fn run_full(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate().stage(Stage::Config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &PipelineConfig) -> Result<RunOutput> {
    let total = Instant::now();
    let mut report = EvalReport::default();
    let (ds, reference) = timed(&mut report, Stage::Ingest, || ingest(config))?;
    if config.single_view_camera >= ds.rig.len() {
        return Err(Error::Config(format!(
            "single_view_camera {} but the rig has {} cameras",
            config.single_view_camera,
            ds.rig.len()
        )))
        .stage(Stage::Config);
    }
    let out = config.output.dir.clone();
    std::fs::create_dir_all(&out).map_err(Error::from).stage(Stage::Output)?;

    let depth = timed(&mut report, Stage::Depth, || depth_stage(&ds, &config.fusion))?;
    if config.output.save_clouds {
        write_depth_stage(&out.join("clouds"), &depth).stage(Stage::Output)?;
    }
    let run = timed(&mut report, Stage::PoseFusion, || pose_stage(&depth, config.single_view_camera, &config.pose))?;
    let trajectory = run.stage2_poses();
    let vol = timed(&mut report, Stage::Integration, || integrate_stage(&depth, &trajectory, &config.volume))?;
    let mesh = timed(&mut report, Stage::Meshing, || extract_mesh(&vol))?;
    let start = Instant::now();
    evaluate(&mut report, config, &ds, &depth, &trajectory, &mesh, &reference).stage(Stage::Evaluation)?;
    report.timing(&Stage::Evaluation.to_string(), start.elapsed().as_secs_f64());

    report.count("frames", ds.frames.len());
    report.count("edges_stage1", run.stage1.edges.len());
    report.count("edges_stage2", run.stage2.edges.len());
    report.count("edges_pruned", run.summary.pruned);
    report.count("edges_replaced", run.summary.replaced);
    report.count("edges_kept", run.summary.kept);
    report.count("edges_restored", run.summary.restored);
    report.count("mesh_vertices", mesh.vertices.len());
    report.count("mesh_triangles", mesh.triangles.len());
    report.count("volume_blocks", vol.allocated_blocks());

    let write = || -> Result<()> {
        io::write_trajectory(&out.join("trajectory.txt"), &trajectory)?;
        io::write_trajectory(&out.join("trajectory_stage1.txt"), &run.stage1_poses())?;
        io::write_graph(&out.join("graph.txt"), &run.stage2)?;
        io::write_ply_mesh(&out.join("mesh.ply"), &mesh)?;
        io::write_obj(&out.join("mesh.obj"), &mesh)?;
        if config.output.save_volume {
            io::write_volume(&out.join("volume.tsdf"), &vol)?;
        }
        Ok(())
    };
    write().stage(Stage::Output)?;
    report.timing("total", total.elapsed().as_secs_f64());
    report.write_json(&out.join("report.json")).stage(Stage::Output)?;
    Ok(RunOutput {
        mesh,
        stage1_trajectory: run.stage1_poses(),
        trajectory,
        report,
        output_dir: out,
    })
}

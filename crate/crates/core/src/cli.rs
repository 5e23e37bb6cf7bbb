//! Command-line front end. Flags override the matching config keys.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::error::{Error, Result, Stage, StageExt};
use crate::geometry::Pose;
use crate::io;
use crate::pipeline::dataset::{read_poses, write_dataset, Adapter, Dataset};
use crate::pipeline::eval::{eval_mesh, eval_trajectory, EvalReport};
use crate::pipeline::run::{depth_stage, ingest, integrate_stage, pose_stage, read_depth_stage, run_full, write_depth_stage};
use crate::pipeline::{PipelineConfig, SyntheticScene};
use crate::volume::{extract_cloud, extract_mesh};

#[derive(Debug, Parser)]
#[command(name = "panorecon", version, about = "Dense reconstruction from a ring of depth cameras")]
pub struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML pipeline configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (`input.path`).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `synthetic` or `trimbot` (`input.adapter`).
    #[arg(long)]
    pub adapter: Option<Adapter>,
    /// Output directory (`output.dir`).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for all cores (`threads`).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic garden to a dataset directory.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: Option<usize>,
        /// Depth noise in meters.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Depth post-processing only; writes cleaned clouds to `<out>/clouds`.
    Depth {
        #[command(flatten)]
        common: Common,
    },
    /// Two-stage pose fusion over cleaned clouds.
    Pose {
        #[command(flatten)]
        common: Common,
        /// Directory written by `depth` (default `<out>/clouds`).
        #[arg(long)]
        clouds: Option<PathBuf>,
        /// Candidate window `j - i <= w` (`pose.graph.window`).
        #[arg(long)]
        window: Option<usize>,
    },
    /// TSDF integration and meshing from clouds and a trajectory.
    Integrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clouds: Option<PathBuf>,
        /// World←rig trajectory (default `<out>/trajectory.txt`).
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// `volume.voxel_size`.
        #[arg(long)]
        voxel_size: Option<f64>,
    },
    /// Compare a trajectory and/or mesh with references.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Ground-truth trajectory (either text format).
        #[arg(long)]
        groundtruth: Option<PathBuf>,
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Reference surface cloud (PLY).
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// The whole pipeline.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        voxel_size: Option<f64>,
        /// Synthetic frame count when no input directory is given.
        #[arg(long)]
        frames: Option<usize>,
    },
}

impl std::str::FromStr for Adapter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(Adapter::Synthetic),
            "trimbot" => Ok(Adapter::Trimbot),
            other => Err(Error::Config(format!("unknown adapter {other:?} (synthetic|trimbot)"))),
        }
    }
}

/// Loads the config file (or defaults) and applies the common overrides.
pub fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut c = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &common.input {
        c.input.path = Some(p.clone());
    }
    if let Some(a) = common.adapter {
        c.input.adapter = a;
    }
    if let Some(o) = &common.out {
        c.output.dir = o.clone();
    }
    if let Some(t) = common.threads {
        c.threads = t;
    }
    Ok(c)
}

fn require_dir(p: &Path) -> Result<()> {
    if p.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} is not a directory", p.display())))
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{} does not exist", p.display())))
    }
}

/// Trajectories in either the quaternion or the 3x4-matrix line format.
pub fn read_any_trajectory(path: &Path) -> Result<Vec<Pose>> {
    io::read_trajectory(path).or_else(|_| read_poses(path))
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?
        .install(f)
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            common,
            frames,
            sigma,
            dropout,
            seed,
        } => {
            let mut c = load_config(&common)?;
            let p = &mut c.synthetic;
            if let Some(n) = frames {
                p.frames = n;
            }
            if let Some(s) = sigma {
                p.noise.depth_sigma = s;
            }
            if let Some(d) = dropout {
                p.noise.dropout = d;
            }
            if let Some(s) = seed {
                p.noise.seed = s;
            }
            c.validate().stage(Stage::Config)?;
            let scene = SyntheticScene::garden(&c.synthetic).map_err(|e| Error::Config(e.to_string()))?;
            in_pool(c.threads, || {
                let ds = Dataset::from_scene(&scene, true).stage(Stage::Ingest)?;
                let out = &c.output.dir;
                write_dataset(out, &ds).stage(Stage::Output)?;
                io::write_ply_cloud(&out.join("reference.ply"), &scene.surface_samples(c.eval.surface_spacing)).stage(Stage::Output)?;
                // a config that runs the pipeline on this dump
                let mut run = c.clone();
                run.input.path = Some(out.clone());
                run.input.adapter = Adapter::Synthetic;
                run.output.dir = out.join("result");
                std::fs::write(out.join("config.toml"), run.to_toml()).map_err(Error::from).stage(Stage::Output)?;
                info!("wrote {} frames to {}", ds.frames.len(), out.display());
                Ok(())
            })
        }
        Command::Depth { common } => {
            let c = load_config(&common)?;
            c.validate().stage(Stage::Config)?;
            in_pool(c.threads, || {
                let (ds, _) = ingest(&c).stage(Stage::Ingest)?;
                let d = depth_stage(&ds, &c.fusion).stage(Stage::Depth)?;
                write_depth_stage(&c.output.dir.join("clouds"), &d).stage(Stage::Output)
            })
        }
        Command::Pose { common, clouds, window } => {
            let mut c = load_config(&common)?;
            if window.is_some() {
                c.pose.graph.window = window;
            }
            let clouds = clouds.unwrap_or_else(|| c.output.dir.join("clouds"));
            require_dir(&clouds).stage(Stage::Config)?;
            c.validate().stage(Stage::Config)?;
            in_pool(c.threads, || {
                let d = read_depth_stage(&clouds).stage(Stage::Ingest)?;
                let run = pose_stage(&d, c.single_view_camera, &c.pose).stage(Stage::PoseFusion)?;
                let out = &c.output.dir;
                let write = || -> Result<()> {
                    std::fs::create_dir_all(out)?;
                    io::write_trajectory(&out.join("trajectory.txt"), &run.stage2_poses())?;
                    io::write_trajectory(&out.join("trajectory_stage1.txt"), &run.stage1_poses())?;
                    io::write_graph(&out.join("graph.txt"), &run.stage2)
                };
                write().stage(Stage::Output)
            })
        }
        Command::Integrate {
            common,
            clouds,
            trajectory,
            voxel_size,
        } => {
            let mut c = load_config(&common)?;
            if let Some(v) = voxel_size {
                c.volume.voxel_size = v;
            }
            let clouds = clouds.unwrap_or_else(|| c.output.dir.join("clouds"));
            let trajectory = trajectory.unwrap_or_else(|| c.output.dir.join("trajectory.txt"));
            require_dir(&clouds).stage(Stage::Config)?;
            require_file(&trajectory).stage(Stage::Config)?;
            c.validate().stage(Stage::Config)?;
            in_pool(c.threads, || {
                let d = read_depth_stage(&clouds).stage(Stage::Ingest)?;
                let poses = read_any_trajectory(&trajectory).stage(Stage::Ingest)?;
                let vol = integrate_stage(&d, &poses, &c.volume).stage(Stage::Integration)?;
                let mesh = extract_mesh(&vol).stage(Stage::Meshing)?;
                let out = &c.output.dir;
                let write = || -> Result<()> {
                    std::fs::create_dir_all(out)?;
                    io::write_ply_mesh(&out.join("mesh.ply"), &mesh)?;
                    io::write_obj(&out.join("mesh.obj"), &mesh)?;
                    io::write_volume(&out.join("volume.tsdf"), &vol)
                };
                write().stage(Stage::Output)
            })
        }
        Command::Eval {
            common,
            trajectory,
            groundtruth,
            mesh,
            reference,
        } => {
            let c = load_config(&common)?;
            for p in [&trajectory, &groundtruth, &mesh, &reference].into_iter().flatten() {
                require_file(p).stage(Stage::Config)?;
            }
            if trajectory.is_some() != groundtruth.is_some() || mesh.is_some() != reference.is_some() {
                return Err(Error::Config("eval needs --trajectory with --groundtruth and --mesh with --reference".into()));
            }
            in_pool(c.threads, || {
                let mut report = EvalReport::default();
                let mut to_gt = Pose::identity();
                if let (Some(t), Some(g)) = (&trajectory, &groundtruth) {
                    let est = read_any_trajectory(t).stage(Stage::Ingest)?;
                    let gt = read_any_trajectory(g).stage(Stage::Ingest)?;
                    report.trajectory = Some(eval_trajectory(&est, &gt).stage(Stage::Evaluation)?);
                    if let (Some(e0), Some(g0)) = (est.first(), gt.first()) {
                        to_gt = g0.compose(&e0.inverse());
                    }
                }
                if let (Some(m), Some(r)) = (&mesh, &reference) {
                    let m = io::read_ply_mesh(m).stage(Stage::Ingest)?;
                    let r = io::read_ply_cloud(r).stage(Stage::Ingest)?;
                    let recon = extract_cloud(&m).transformed(&to_gt, "world");
                    report.mesh = Some(eval_mesh(&recon, &r).stage(Stage::Evaluation)?);
                }
                std::fs::create_dir_all(&c.output.dir).map_err(Error::from).stage(Stage::Output)?;
                report.write_json(&c.output.dir.join("report.json")).stage(Stage::Output)
            })
        }
        Command::Run {
            common,
            window,
            voxel_size,
            frames,
        } => {
            let mut c = load_config(&common)?;
            if window.is_some() {
                c.pose.graph.window = window;
            }
            if let Some(v) = voxel_size {
                c.volume.voxel_size = v;
            }
            if let Some(n) = frames {
                c.synthetic.frames = n;
            }
            let out = run_full(&c)?;
            info!("wrote results to {}", out.output_dir.display());
            Ok(())
        }
    }
}

/// Process exit code for an outcome: 0 success, 2 configuration or input
/// problems, 1 anything failing inside a stage.
pub fn exit_code(r: &Result<()>) -> i32 {
    match r {
        Ok(()) => 0,
        Err(e) if e.is_config() => 2,
        Err(_) => 1,
    }
}

//! Synthetic data, dataset loading, orchestration and evaluation.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod run;
pub mod scene;

pub use scene::{rig_pose, synth_render, GardenParams, NoiseModel, Primitive, SyntheticScene};
pub use dataset::{load_dataset, write_dataset, Adapter, Dataset, Frame, TRIMBOT_RESOLUTION};
pub use eval::{align_first, eval_badx, eval_mesh, eval_trajectory, mean_std, EvalReport, MeshEval, TrajectoryEval, BADX_UNIT};
pub use config::{CameraConfig, EvalConfig, InputConfig, OutputConfig, PipelineConfig, VolumeConfig};
pub use run::{depth_stage, evaluate, ingest, integrate_stage, pose_stage, read_depth_stage, run_full, write_depth_stage, DepthStage, FrameClouds, Reference, RunOutput};

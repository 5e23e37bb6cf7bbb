//! Global registration of two full-view garden clouds, ICP on the forward
//! single views, and the overlap score that gates the second stage.
//!
//! `cargo run --release --example register_pair`

use panorecon::pipeline::run::depth_stage;
use panorecon::pipeline::{Dataset, GardenParams, SyntheticScene};
use panorecon::depth::FusionParams;
use panorecon::registration::{
    estimate_normals, global_register, icp_refine, overlap_percentage, voxel_downsample, GlobalRegParams, IcpParams,
};

fn main() -> panorecon::Result<()> {
    let scene = SyntheticScene::garden(&GardenParams { frames: 3, ..Default::default() })?;
    let ds = Dataset::from_scene(&scene, false)?;
    let nodes = depth_stage(&ds, &FusionParams::default())?.nodes(0)?;
    let gt = ds.ground_truth().expect("rendered poses");
    let (i, j) = (0, 2);
    let truth = gt[i].inverse().compose(&gt[j]);

    let coarse = global_register(&nodes[j].full_cloud, &nodes[i].full_cloud, &GlobalRegParams::default())?;
    let report = |name: &str, t: &panorecon::geometry::Pose| {
        let e = truth.inverse().compose(t);
        println!("{name:8} error {:.3} m / {:.2} deg", e.translation().norm(), e.angle().to_degrees());
    };
    report("global", &coarse.transform);
    println!("         overlap {:.2}, converged {}", coarse.overlap, coarse.converged);

    let source = voxel_downsample(&nodes[j].single_cloud, 0.02);
    let target = estimate_normals(&voxel_downsample(&nodes[i].single_cloud, 0.02), 0.1);
    let fine = icp_refine(&source, &target, &coarse.transform, &IcpParams::default())?;
    report("icp", &fine.transform);
    let beta = overlap_percentage(&nodes[j].single_cloud, &nodes[i].single_cloud, &fine.transform, 0.05)?;
    println!("         single-view overlap {beta:.2} after {} iterations", fine.iterations);
    Ok(())
}

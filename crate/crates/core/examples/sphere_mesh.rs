//! TSDF fusion of rendered depth maps of a sphere and a marching-cubes mesh.
//!
//! `cargo run --release --example sphere_mesh -- [out.ply]`

use nalgebra::{Matrix3, Vector3};
use panorecon::depth::DepthMap;
use panorecon::geometry::{CameraIntrinsics, Pose};
use panorecon::io::write_ply_mesh;
use panorecon::volume::{extract_mesh, Allocation, IntegrationParams, TsdfVolume};

fn main() -> panorecon::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sphere.ply".into());
    let (r, voxel) = (0.5, 0.01);
    let k = CameraIntrinsics::from_hfov(320, 240, 60.0, 0.1)?;
    let params = IntegrationParams::default();
    let mut vol = TsdfVolume::covering(Vector3::repeat(-0.7), Vector3::repeat(0.7), voxel, params.truncation, Allocation::Sparse)?;

    for view in 0..6 {
        let a = std::f64::consts::TAU * view as f64 / 6.0;
        let eye = Vector3::new(1.6 * a.cos(), 1.6 * a.sin(), 0.4);
        let z = (-eye).normalize();
        let x = Vector3::z().cross(&z).normalize();
        let pose = Pose::new(Matrix3::from_columns(&[x, z.cross(&x), z]), eye);
        let depth = DepthMap::from_fn(k, |u, v| {
            let d = pose.transform_vector(&k.backproject(u as f64, v as f64, 1.0));
            let (b, c) = (eye.dot(&d), eye.norm_squared() - r * r);
            let disc = b * b - d.norm_squared() * c;
            (disc >= 0.0).then(|| (-b - disc.sqrt()) / d.norm_squared())
        });
        vol.integrate(&depth, &pose, &params)?;
    }

    let mesh = extract_mesh(&vol)?;
    let err = mesh.vertices.iter().map(|v| (v.norm() - r).abs()).sum::<f64>() / mesh.vertices.len() as f64;
    println!(
        "{} blocks, {} triangles, mean radial error {:.4} m, area {:.3} m^2 (sphere {:.3})",
        vol.allocated_blocks(),
        mesh.triangles.len(),
        err,
        mesh.surface_area(),
        4.0 * std::f64::consts::PI * r * r
    );
    write_ply_mesh(std::path::Path::new(&out), &mesh)?;
    println!("wrote {out}");
    Ok(())
}

//! Depth post-processing on one rendered garden frame: disparity conversion,
//! the two tanh output mappings, outlier removal and full-view assembly.
//!
//! `cargo run --release --example depth_cleanup`

use panorecon::depth::{
    assemble_full_view, backproject, depth_to_disparity, disparity_to_depth, map_tanh_output, remove_outliers, FusionParams,
    TanhMapping,
};
use panorecon::pipeline::{eval_badx, GardenParams, SyntheticScene};

fn main() -> panorecon::Result<()> {
    let scene = SyntheticScene::garden(&GardenParams { frames: 1, ..Default::default() })?;
    let (maps, _) = scene.render(0)?;
    let k = scene.intrinsics;

    let disp = depth_to_disparity(&maps[0]);
    let back = disparity_to_depth(&disp);
    let gt = scene.render_exact(&scene.trajectory[0].compose(scene.rig.camera(0)));
    for x in [1.0, 2.0, 4.0] {
        println!("bad{x}: {:.3}", eval_badx(&back, &gt, x, 5.0)?);
    }

    // the same tanh outputs read through both mappings
    let w: Vec<f64> = (0..k.pixel_count()).map(|i| -0.999 + 1.998 * (i as f64 / k.pixel_count() as f64)).collect();
    for mapping in [TanhMapping::MaxDistance { max_dist: 5.0 }, TanhMapping::MaxDisparity { max_disp: 64.0 }] {
        let depth = disparity_to_depth(&map_tanh_output(&w, mapping, &k)?);
        let far = depth.values().iter().cloned().fold(0.0, f64::max);
        println!("{mapping:?}: deepest pixel {far:.2} m");
    }

    let params = FusionParams::default();
    let mut views = Vec::new();
    for (cam, m) in maps.iter().enumerate() {
        let raw = backproject(&m.clipped(params.max_dist));
        let clean = remove_outliers(&raw, &params);
        println!("camera {cam}: {} points, {} after outlier removal", raw.len(), clean.len());
        views.push(clean);
    }
    let full = assemble_full_view(&views, &scene.rig)?;
    let (lo, hi) = full.bounds().expect("non-empty");
    println!("full view: {} points spanning {:.1?} to {:.1?}", full.len(), lo, hi);
    Ok(())
}

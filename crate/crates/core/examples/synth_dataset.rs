//! Writes a small synthetic garden to disk in the dataset layout and reads it
//! back.
//!
//! `cargo run --release --example synth_dataset -- [dir] [frames]`

use panorecon::pipeline::{load_dataset, write_dataset, Adapter, Dataset, GardenParams, SyntheticScene};

fn main() -> panorecon::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "garden_data".into()));
    let frames = args.next().map(|s| s.parse().expect("frame count")).unwrap_or(3);
    let scene = SyntheticScene::garden(&GardenParams { frames, ..Default::default() })?;
    println!("{} primitives, {} cameras on the rig", scene.primitives.len(), scene.rig.len());

    let ds = Dataset::from_scene(&scene, true)?;
    write_dataset(&dir, &ds)?;
    let back = load_dataset(&dir, Adapter::Synthetic)?;
    println!("wrote and reloaded {} frames under {}", back.frames.len(), dir.display());
    println!("reload identical: {}", back == ds);
    Ok(())
}
